use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use feedersim::engine::{run_on, Metrics, RunOptions};
use feedersim::experiment::{
    compare_modes, fixed_fleet, is_time_metric, replicate_on, sweep, CompareRow, CompareSettings, Replication,
    SweepAxis, DEFAULT_FLEET_CAP,
};
use feedersim::scenario::{parse_scenario, Mode, Scenario};
use feedersim::Error;

#[derive(Parser)]
#[command(name = "feedersim", version, about = "Simulate ride-pooling feeder services to a transit hub")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metrics and the trip log.
    Run {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also write a vehicle state trace every this many steps.
        #[arg(long)]
        trace_every: Option<u64>,
    },
    /// Replicate the scenario for each value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// demand_scale, inbound_scale, fleet, u, alpha or policy.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find the fleet each mode needs to reach a target service rate.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated modes: rpaf, rsaf, flexfbt, taxi.
        #[arg(long, value_delimiter = ',', required = true)]
        modes: Vec<Mode>,
        /// Target service rate in percent.
        #[arg(long, default_value_t = 90.0)]
        target: f64,
        #[arg(long, default_value_t = DEFAULT_FLEET_CAP)]
        fleet_cap: usize,
        /// Report service rates at this fleet size instead of searching.
        #[arg(long)]
        fixed_fleet: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a scenario and print it with all defaults filled in.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML). Omit for the built-in baseline.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Single seed, overriding the scenario's `seed`.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seeds as a list (1,2,3) or an inclusive range (1..5).
    #[arg(long)]
    seeds: Option<String>,
    /// key=value scenario overrides, applied after the file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

/// Marks an error as a configuration problem (exit code 1).
#[derive(Debug)]
struct ConfigError(anyhow::Error);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config<E: Into<anyhow::Error>>(e: E) -> anyhow::Error {
    anyhow::Error::new(ConfigError(e.into()))
}

fn core_err(e: Error) -> anyhow::Error {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => config(e),
        other => other.into(),
    }
}

fn parse_seeds(s: &str) -> anyhow::Result<Vec<u64>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if b < a {
            return Err(anyhow!("empty seed range {s}"));
        }
        return Ok((a..=b).collect());
    }
    let seeds = s
        .split(',')
        .map(|x| x.trim().parse::<u64>())
        .collect::<Result<Vec<_>, _>>()?;
    if seeds.is_empty() {
        return Err(anyhow!("no seeds given"));
    }
    Ok(seeds)
}

impl Common {
    fn scenario(&self) -> anyhow::Result<Scenario> {
        let base = match &self.scenario {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("cannot read scenario {}", path.display()))
                    .map_err(config)?;
                parse_scenario(&text).map_err(core_err)?
            }
            None => Scenario::baseline(),
        };
        let mut sc = base.with_overrides(&self.overrides).map_err(core_err)?;
        if let Some(seed) = self.seed {
            sc.seed = seed;
        }
        sc.validate().map_err(core_err)?;
        Ok(sc)
    }

    /// Seeds for commands that replicate: --seed, --seeds, else the scenario's list.
    fn seeds(&self, sc: &Scenario) -> anyhow::Result<Vec<u64>> {
        if let Some(s) = self.seed {
            return Ok(vec![s]);
        }
        match &self.seeds {
            Some(s) => parse_seeds(s).context("invalid --seeds").map_err(config),
            None => Ok(sc.seeds.clone()),
        }
    }
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map(|x| format!("{x:.decimals$}")).unwrap_or_default()
}

fn decimals_for(metric: &str) -> usize {
    match metric {
        m if is_time_metric(m) => 4,
        "avg_occupancy" => 2,
        _ => 1,
    }
}

fn metrics_text(m: &Metrics) -> String {
    let show = |v: Option<f64>, d: usize| v.map(|x| format!("{x:.d$}")).unwrap_or_else(|| "n/a".into());
    let mut s = String::new();
    let _ = writeln!(s, "requests          {}", m.requests);
    let _ = writeln!(s, "completed         {}", m.completed);
    let _ = writeln!(s, "canceled          {}", m.canceled);
    let _ = writeln!(s, "in system         {}", m.in_system);
    let _ = writeln!(s, "service rate %    {}", show(m.service_rate, 1));
    let _ = writeln!(s, "outbound rate %   {}", show(m.outbound_service_rate, 1));
    let _ = writeln!(s, "avg wait h        {}", show(m.avg_wait_h, 4));
    let _ = writeln!(s, "avg ride h        {}", show(m.avg_ride_h, 4));
    let _ = writeln!(s, "avg trip h        {}", show(m.avg_trip_h, 4));
    let _ = writeln!(s, "vehicle km        {:.1}", m.vehicle_km);
    let _ = writeln!(s, "avg occupancy     {}", show(m.avg_occupancy, 2));
    let _ = writeln!(s, "leftover %        {}", show(m.leftover_pct, 1));
    s
}

fn summary_csv(rep: &Replication) -> String {
    let mut s = String::from("metric,mean,sd,n\n");
    for m in &rep.summary {
        let d = decimals_for(m.metric);
        let _ = writeln!(s, "{},{},{},{}", m.metric, fmt_opt(m.mean, d), fmt_opt(m.sd, d), m.n);
    }
    s
}

fn compare_csv(rows: &[CompareRow]) -> String {
    let mut s = String::from("mode,fleet,attainable,service_rate,avg_trip_h,avg_wait_h\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.mode,
            r.fleet,
            r.attainable,
            fmt_opt(r.service_rate, 1),
            fmt_opt(r.avg_trip_h, 4),
            fmt_opt(r.avg_wait_h, 4)
        );
    }
    s
}

fn prepare_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_run(common: &Common, out: &Path, trace_every: Option<u64>) -> anyhow::Result<()> {
    let sc = common.scenario()?;
    let net = sc.build_network().map_err(core_err)?;
    prepare_out(out)?;
    write(out, "scenario.toml", &sc.to_toml())?;
    let options = RunOptions { check_invariants: false, trace_every };
    if common.seeds.is_none() {
        let res = run_on(&net, &sc, sc.seed, options)?;
        write(out, "trips.csv", &res.trips_csv()?)?;
        write(out, "metrics.json", &serde_json::to_string_pretty(&res.metrics)?)?;
        if trace_every.is_some() {
            res.write_trace(&out.join("trace.csv"))?;
        }
        let rep = Replication::from_runs(vec![res]);
        write(out, "summary.csv", &summary_csv(&rep))?;
        print!("seed {}\n{}", sc.seed, metrics_text(&rep.runs[0].metrics));
        return Ok(());
    }
    let seeds = common.seeds(&sc)?;
    let rep = replicate_on(&net, &sc, &seeds, options, None)?;
    for r in &rep.runs {
        write(out, &format!("trips_seed{}.csv", r.seed), &r.trips_csv()?)?;
    }
    let summary = summary_csv(&rep);
    write(out, "summary.csv", &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_sweep(common: &Common, axis: SweepAxis, values: &[String], out: &Path) -> anyhow::Result<()> {
    let sc = common.scenario()?;
    let seeds = common.seeds(&sc)?;
    for v in values {
        axis.apply(&sc, v).map_err(core_err)?;
    }
    prepare_out(out)?;
    let points = sweep(&sc, axis, values, &seeds).map_err(core_err)?;
    let mut s = String::from("axis,value,metric,mean,sd,n\n");
    for p in &points {
        for m in &p.replication.summary {
            let d = decimals_for(m.metric);
            let _ = writeln!(s, "{axis},{},{},{},{},{}", p.value, m.metric, fmt_opt(m.mean, d), fmt_opt(m.sd, d), m.n);
        }
    }
    write(out, "sweep.csv", &s)?;
    print!("{s}");
    Ok(())
}

fn cmd_compare(
    common: &Common,
    modes: &[Mode],
    settings: CompareSettings,
    fixed: Option<usize>,
    out: &Path,
) -> anyhow::Result<()> {
    let sc = common.scenario()?;
    let seeds = common.seeds(&sc)?;
    if fixed.is_none() && modes.len() < 2 {
        return Err(config(anyhow!("compare needs at least two modes (or --fixed-fleet)")));
    }
    prepare_out(out)?;
    let rows = match fixed {
        Some(n) => fixed_fleet(&sc, modes, n, &seeds),
        None => compare_modes(&sc, modes, settings, &seeds),
    }
    .map_err(core_err)?;
    let s = compare_csv(&rows);
    write(out, "compare.csv", &s)?;
    print!("{s}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common, out, trace_every } => cmd_run(common, out, *trace_every),
        Command::Sweep { common, axis, values, out } => cmd_sweep(common, *axis, values, out),
        Command::Compare { common, modes, target, fleet_cap, fixed_fleet, out } => cmd_compare(
            common,
            modes,
            CompareSettings { target_service_rate: *target, fleet_cap: *fleet_cap },
            *fixed_fleet,
            out,
        ),
        Command::Validate { common } => common.scenario().map(|sc| print!("{}", sc.to_toml())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
