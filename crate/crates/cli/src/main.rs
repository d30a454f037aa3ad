use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use axiswalk::engine::{run_walk, AxisKernel, WalkObserver, WalkSnapshot};
use axiswalk::harness::{ExperimentConfig, Scenario, ScenarioReport, Session, CSV_HEADER};
use axiswalk::limits::{
    invert_mu, log_grid, mu_log_laplace, s1, theorem1_tail, theorem2_tail, StableLawSpec,
};
use axiswalk::oracle::{
    axis_absorption_solve, entry_kernel, invariant_fixed_point, quadrant_exit_dp, walk_law_dp_from,
    FixedPointOptions, LimitConstants, Truncation,
};
use axiswalk::rng::RngStreamSpec;
use axiswalk::{Error, LatticePoint, ModelParams};

/// Like `println!`, but a closed pipe surfaces as an error.
macro_rules! out {
    ($($t:tt)*) => {
        writeln!(io::stdout(), $($t)*)?
    };
}

#[derive(Parser)]
#[command(name = "axiswalk", version, about = "Axis-driven random walk: simulation, exact oracles, limit laws")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Raw walks; one CSV line per replica and mark.
    Simulate(SimulateArgs),
    /// Exact tables and constants.
    #[command(subcommand)]
    Oracle(OracleCmd),
    /// Evaluate and invert the limit laws.
    #[command(subcommand)]
    Limits(LimitsCmd),
    /// Run one catalogue scenario.
    Verify(VerifyArgs),
    /// Combine report JSON files into one CSV.
    Report(ReportArgs),
    /// List the catalogue.
    Scenarios,
}

/// Integers written as `100000`, `1e5` or `2^20`.
fn count(s: &str) -> Result<u64, String> {
    if let Some((b, e)) = s.split_once('^') {
        let b: u64 = b.parse().map_err(|e| format!("{e}"))?;
        let e: u32 = e.parse().map_err(|e| format!("{e}"))?;
        return b.checked_pow(e).ok_or_else(|| "overflow".to_string());
    }
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("not a count: {s}"))?;
    if f < 0.0 || f.fract() != 0.0 || f > u64::MAX as f64 {
        return Err(format!("not a count: {s}"));
    }
    Ok(f as u64)
}

fn point(s: &str) -> Result<LatticePoint, String> {
    let (a, b) = s
        .trim_matches(|c| c == '(' || c == ')')
        .split_once(',')
        .ok_or_else(|| format!("expected x1,x2, got {s}"))?;
    let x1 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let x2 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok(LatticePoint::new(x1, x2))
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 4.0)]
    alpha: f64,
    #[arg(long, value_parser = count)]
    n: u64,
    #[arg(long, value_parser = count, default_value = "1")]
    replicas: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_parser = point, default_value = "1,1")]
    start: LatticePoint,
    /// Extra observation times, comma separated.
    #[arg(long, value_parser = count, value_delimiter = ',')]
    marks: Option<Vec<u64>>,
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Stationary entrance law and the constants c1, kappa.
    Constants(TruncArgs),
    /// Stationary entrance law as CSV.
    Invariant(TruncArgs),
    /// Joint law of exit time and exit point for the walk killed on the axes.
    ExitTable {
        #[arg(long, value_parser = point, default_value = "1,1")]
        x: LatticePoint,
        #[arg(long, value_parser = count)]
        k: u64,
    },
    /// Law of the full walk after n steps.
    WalkLaw {
        #[arg(long, default_value_t = 4.0)]
        alpha: f64,
        #[arg(long, value_parser = count)]
        n: u64,
        #[arg(long, value_parser = point, default_value = "1,1")]
        start: LatticePoint,
    },
    /// Mean axis sojourn and entry law from an axis point.
    Axis {
        #[arg(long, default_value_t = 4.0)]
        alpha: f64,
        #[arg(long, value_parser = point)]
        z: LatticePoint,
        #[arg(long, value_parser = count, default_value = "512")]
        axis_len: u64,
    },
}

#[derive(Args)]
struct TruncArgs {
    #[arg(long, default_value_t = 4.0)]
    alpha: f64,
    #[arg(long, value_parser = count, default_value = "2048")]
    k_max: u64,
    #[arg(long, value_parser = count, default_value = "512")]
    axis_len: u64,
    #[arg(long, value_parser = count, default_value = "64")]
    radius: u64,
}

#[derive(Args)]
struct LawArgs {
    /// Use these constants instead of the oracle fixed point.
    #[arg(long, requires = "kappa")]
    c1: Option<f64>,
    #[arg(long, requires = "c1")]
    kappa: Option<f64>,
    #[arg(long, default_value_t = 4.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    h: f64,
}

#[derive(Subcommand)]
enum LimitsCmd {
    /// S1 and the log-Laplace transform of the limit measure at lambda.
    Eval {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long)]
        lambda: f64,
    },
    /// Invert the limit measure on a log grid and print it as CSV.
    Invert {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long, default_value_t = 1e-2)]
        s_lo: f64,
        #[arg(long, default_value_t = 1e2)]
        s_hi: f64,
        #[arg(long, default_value_t = 512)]
        points: usize,
    },
    /// Limiting tails: the joint tail at a, and the position tail at (a, a).
    Tails {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long, value_delimiter = ',')]
        a: Vec<f64>,
    },
}

#[derive(Args)]
struct VerifyArgs {
    scenario: String,
    #[arg(long)]
    seed: u64,
    /// JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_parser = count)]
    replicas: Option<u64>,
    #[arg(long, value_parser = count, value_delimiter = ',')]
    horizons: Option<Vec<u64>>,
    #[arg(long, value_parser = point)]
    start: Option<LatticePoint>,
    #[arg(long, value_parser = count)]
    cap: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    checkpoint_interval: Option<f64>,
    #[arg(long, value_parser = count)]
    stop_after_blocks: Option<u64>,
    /// Make trend verdicts count toward the exit code.
    #[arg(long)]
    trends_fatal: bool,
    /// Print the materialized config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON files written by `verify`.
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

fn constants(law: &LawArgs) -> Result<LimitConstants> {
    Ok(match (law.c1, law.kappa) {
        (Some(c1), Some(kappa)) => LimitConstants::toy(kappa, c1),
        _ => {
            let params = ModelParams::new(law.alpha)?;
            let kernel = entry_kernel(&params, Truncation::default())?;
            invariant_fixed_point(&kernel, FixedPointOptions::default())?.constants
        }
    })
}

struct Marks {
    marks: Vec<u64>,
    seen: Vec<WalkSnapshot>,
}

impl WalkObserver for Marks {
    fn marks(&self) -> &[u64] {
        &self.marks
    }
    fn on_mark(&mut self, snap: &WalkSnapshot) {
        self.seen.push(*snap);
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let kernel = AxisKernel::new(ModelParams::new(a.alpha)?);
    let base = RngStreamSpec::new(a.seed, 0);
    let mut marks = a.marks.unwrap_or_default();
    marks.retain(|&m| m < a.n);
    marks.sort_unstable();
    marks.dedup();
    let out = io::stdout();
    let mut out = out.lock();
    writeln!(out, "replica,t,x1,x2,entrances,rho_last")?;
    for r in 0..a.replicas {
        let mut obs = Marks {
            marks: marks.clone(),
            seen: Vec::new(),
        };
        let o = run_walk(&kernel, a.n, a.start, base.nth(r), &mut obs);
        for s in &obs.seen {
            writeln!(out, "{r},{},{},{},{},{}", s.t, s.position.x1, s.position.x2, s.entrances, s.rho_last)?;
        }
        writeln!(
            out,
            "{r},{},{},{},{},{}",
            o.n, o.final_position.x1, o.final_position.x2, o.entrances, o.rho_last
        )?;
    }
    Ok(())
}

fn oracle(cmd: OracleCmd) -> Result<()> {
    let out = io::stdout();
    match cmd {
        OracleCmd::Constants(t) => {
            let (law, ledger) = invariant(&t)?;
            let v = serde_json::json!({ "constants": law.constants, "iterations": law.iterations, "kernel_ledger": ledger });
            out!("{}", serde_json::to_string_pretty(&v)?);
        }
        OracleCmd::Invariant(t) => {
            let (law, ledger) = invariant(&t)?;
            law.write_csv(out.lock(), &ledger)?;
        }
        OracleCmd::ExitTable { x, k } => quadrant_exit_dp(x, k)?.write_csv(out.lock())?,
        OracleCmd::WalkLaw { alpha, n, start } => {
            walk_law_dp_from(&ModelParams::new(alpha)?, n, n + 1, start)?.write_csv(out.lock())?
        }
        OracleCmd::Axis { alpha, z, axis_len } => {
            let axis = axis_absorption_solve(&ModelParams::new(alpha)?, axis_len)?;
            let v = serde_json::json!({
                "z": z,
                "expected_rho": axis.expected_rho(z),
                "ledger": axis.ledger(z),
            });
            out!("{}", serde_json::to_string_pretty(&v)?);
        }
    }
    Ok(())
}

fn invariant(t: &TruncArgs) -> Result<(axiswalk::oracle::InvariantLaw, axiswalk::oracle::MassLedger)> {
    let params = ModelParams::new(t.alpha)?;
    let trunc = Truncation {
        k_max: t.k_max,
        axis_len: t.axis_len,
        radius: t.radius,
    };
    let kernel = entry_kernel(&params, trunc)?;
    let law = invariant_fixed_point(&kernel, FixedPointOptions::default())?;
    Ok((law, kernel.ledger.clone()))
}

fn limits(cmd: LimitsCmd) -> Result<()> {
    match cmd {
        LimitsCmd::Eval { law, lambda } => {
            let k = constants(&law)?;
            let spec = StableLawSpec::new(k.clone(), law.h)?;
            let v = serde_json::json!({
                "lambda": lambda,
                "s1": s1(lambda, &k)?,
                "mu_log_laplace": mu_log_laplace(lambda, &spec)?,
                "constants": k,
            });
            out!("{}", serde_json::to_string_pretty(&v)?);
        }
        LimitsCmd::Invert { law, s_lo, s_hi, points } => {
            let spec = StableLawSpec::new(constants(&law)?, law.h)?;
            let inv = invert_mu(&spec, &log_grid(s_lo, s_hi, points))?;
            eprintln!("round-trip residual {:e}", inv.roundtrip_residual);
            inv.write_csv(io::stdout().lock())?;
        }
        LimitsCmd::Tails { law, a } => {
            let spec = StableLawSpec::new(constants(&law)?, law.h)?;
            let inv = invert_mu(&spec, &log_grid(1e-2, 1e2, 512))?;
            out!("a,joint_tail,position_tail");
            for a in a {
                let pos = if law.h == 0.0 { theorem1_tail(a, a, &inv)?.to_string() } else { String::new() };
                out!("{a},{},{pos}", theorem2_tail(a, &inv)?);
            }
        }
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<ExitCode> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let mut c = ExperimentConfig::from_json(&text)?;
            c.scenario = a.scenario.clone();
            c
        }
        None => ExperimentConfig::new(&a.scenario, a.seed),
    };
    cfg.seed = a.seed;
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if a.replicas.is_some() {
        cfg.replicas = a.replicas;
    }
    if a.horizons.is_some() {
        cfg.horizons = a.horizons.clone();
    }
    if a.start.is_some() {
        cfg.start = a.start;
    }
    if a.cap.is_some() {
        cfg.cap = a.cap;
    }
    if let Some(e) = a.epsilon {
        cfg.epsilon = e;
    }
    if a.output.is_some() {
        cfg.output = a.output.clone();
    }
    if a.checkpoint.is_some() {
        cfg.checkpoint = a.checkpoint.clone();
    }
    if let Some(s) = a.checkpoint_interval {
        cfg.checkpoint_interval_secs = s;
    }
    if a.stop_after_blocks.is_some() {
        cfg.stop_after_blocks = a.stop_after_blocks;
    }
    if a.trends_fatal {
        cfg.thresholds.trends_fatal = true;
    }
    if a.print_config {
        out!("{}", serde_json::to_string_pretty(&cfg.materialized()?)?);
        return Ok(ExitCode::SUCCESS);
    }
    let report = match Session::new().run(&cfg) {
        Ok(r) => r,
        Err(axiswalk::Error::Interrupted { blocks, path }) => {
            eprintln!("interrupted after {blocks} blocks; resume with the same config from {path}");
            return Ok(ExitCode::from(3));
        }
        Err(e) => return Err(e.into()),
    };
    write!(io::stdout(), "{}", report.summary())?;
    eprintln!("{:.1} s", report.wall_clock_secs);
    Ok(ExitCode::from(report.exit_code() as u8))
}

fn report(a: ReportArgs) -> Result<ExitCode> {
    let mut ok = true;
    out!("{CSV_HEADER}");
    for f in &a.files {
        let text = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        let r: ScenarioReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", f.display()))?;
        let csv = r.to_csv();
        for line in csv.lines().skip(1) {
            out!("{line}");
        }
        ok &= r.exit_code() == 0;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn broken_pipe(e: &anyhow::Error) -> bool {
    let kind = |io: &io::Error| io.kind() == io::ErrorKind::BrokenPipe;
    e.chain().any(|c| match c.downcast_ref::<io::Error>() {
        Some(io) => kind(io),
        None => matches!(c.downcast_ref::<Error>(), Some(Error::Io(io)) if kind(io)),
    })
}

fn main() -> Result<ExitCode> {
    match run() {
        Err(e) if broken_pipe(&e) => Ok(ExitCode::SUCCESS),
        other => other,
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Simulate(a) => simulate(a)?,
        Cmd::Oracle(c) => oracle(c)?,
        Cmd::Limits(c) => limits(c)?,
        Cmd::Verify(a) => return verify(a),
        Cmd::Report(a) => return report(a),
        Cmd::Scenarios => {
            for s in Scenario::ALL {
                out!("{}", s.name());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
