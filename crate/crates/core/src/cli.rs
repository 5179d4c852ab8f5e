//! Command-line front end: `mvldp <command> --config PATH --out DIR`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 a check or
//! validation failed. Every command writes `manifest.json` next to its
//! outputs; passing that manifest back as `--config` reproduces the run.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::averaging::{average_at, AveragedCoeffs};
use crate::config::{fitted_dt, load_config, RunConfig};
use crate::expr::CoeffField;
use crate::golden::{run_criterion, Plan, CRITERIA};
use crate::hjb::{solve_1d, HjbConfig};
use crate::ldp::{laplace, rate, tightness_probe, LdpError, McConfig, RateOptions, TestFunction};
use crate::simulate::{
    run_path, run_system, verify_discrete_vi, verify_dissipativity, verify_interior_estimate, verify_lyapunov, write_paths_csv,
    LyapunovOptions, ScaleParams,
};

#[derive(Debug, Parser)]
#[command(name = "mvldp", version, about = "Slow-fast multivalued SDEs: simulation, averaging, rate functions and HJB")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file, a previous manifest.json, or `example5`.
    #[arg(long, global = true, default_value = crate::config::BUILTIN_EXAMPLE)]
    pub config: String,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to MVLDP_THREADS, then to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Dotted-key override such as `laplace.paths=1000`; repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate paths of the slow-fast system for the first scale pair.
    Simulate,
    /// Averaged coefficients on the averaging grid.
    Average,
    /// Rate function at the configured target.
    Rate,
    /// Laplace functional for every scale pair.
    Laplace,
    /// Grid solution of the limiting Hamilton-Jacobi equation.
    Hjb,
    /// Assumption verifiers.
    Check,
    /// Golden validation suite.
    Validate,
    /// Exponential tightness probe.
    Tightness,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Average => "average",
            Command::Rate => "rate",
            Command::Laplace => "laplace",
            Command::Hjb => "hjb",
            Command::Check => "check",
            Command::Validate => "validate",
            Command::Tightness => "tightness",
        }
    }
}

type CmdResult = Result<bool, Box<dyn std::error::Error + Send + Sync>>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = cli
        .threads
        .or_else(|| std::env::var("MVLDP_THREADS").ok().and_then(|v| v.parse().ok()));
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = match load_config(&cli.config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let outcome = pool.install(|| dispatch(cli.command, &cfg, &cli.out));
    match outcome {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command, cfg: &RunConfig, out: &Path) -> CmdResult {
    fs::create_dir_all(out)?;
    let ok = match cmd {
        Command::Simulate => simulate(cfg, out)?,
        Command::Average => average(cfg, out)?,
        Command::Rate => rate_cmd(cfg, out)?,
        Command::Laplace => laplace_cmd(cfg, out)?,
        Command::Hjb => hjb_cmd(cfg, out)?,
        Command::Check => check(cfg, out)?,
        Command::Validate => validate(cfg, out)?,
        Command::Tightness => tightness(cfg, out)?,
    };
    write_manifest(cmd, cfg, out)?;
    Ok(ok)
}

pub fn manifest(cmd: &str, cfg: &RunConfig) -> Value {
    json!({
        "tool": "mvldp",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cmd,
        "seed": cfg.seed,
        "config_sha256": cfg.hash(),
        "config": cfg.resolved,
    })
}

fn write_manifest(cmd: Command, cfg: &RunConfig, out: &Path) -> std::io::Result<()> {
    write_json(&out.join("manifest.json"), &manifest(cmd.name(), cfg))
}

fn write_json(path: &Path, v: &Value) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, v)?;
    w.write_all(b"\n")?;
    w.flush()
}

fn first_scale(cfg: &RunConfig) -> ScaleParams {
    cfg.scales[0]
}

fn simulate(cfg: &RunConfig, out: &Path) -> CmdResult {
    let sim = cfg.sim.resolve(first_scale(cfg), cfg.seed);
    let paths = run_system(&cfg.system, first_scale(cfg), &sim)?;
    let mut w = BufWriter::new(File::create(out.join("paths.csv"))?);
    write_paths_csv(&paths, &mut w)?;
    w.flush()?;
    Ok(true)
}

fn average(cfg: &RunConfig, out: &Path) -> CmdResult {
    let n = cfg.system.n;
    let acfg = cfg.averaging.resolve(cfg.seed);
    let xs: Vec<Vec<f64>> = match &cfg.averaging.grid {
        Some(g) if n == 1 => g.iter().map(|x| vec![*x]).collect(),
        Some(_) => return Err("averaging.grid requires a one-dimensional slow variable".into()),
        None => vec![cfg.system.x0.clone()],
    };
    let mut w = BufWriter::new(File::create(out.join("average.csv"))?);
    let mut header: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    header.extend((0..n).map(|i| format!("bbar{i}")));
    header.extend((0..n * n).map(|k| format!("abar{}_{}", k / n, k % n)));
    header.extend((0..n * n).map(|k| format!("sigbar{}_{}", k / n, k % n)));
    header.extend((0..n).map(|i| format!("stderr_bbar{i}")));
    header.extend((0..n * n).map(|k| format!("stderr_abar{}_{}", k / n, k % n)));
    writeln!(w, "{}", header.join(","))?;
    for x in &xs {
        let p = average_at(&cfg.system, x, &acfg)?;
        let row: Vec<String> = x
            .iter()
            .chain(&p.bbar.value)
            .chain(&p.abar.value)
            .chain(&p.sigbar)
            .chain(&p.bbar.stderr)
            .chain(&p.abar.stderr)
            .map(|v| v.to_string())
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(true)
}

fn coefficients(cfg: &RunConfig) -> Result<AveragedCoeffs, Box<dyn std::error::Error + Send + Sync>> {
    Ok(cfg.averaging.coefficients(&cfg.system, cfg.seed)?)
}

fn rate_cmd(cfg: &RunConfig, out: &Path) -> CmdResult {
    let avg = coefficients(cfg)?;
    let target = cfg.rate.target.clone().ok_or("rate.target is required")?;
    let opts = RateOptions {
        steps: cfg.rate.steps,
        tol_gap: cfg.rate.tol_gap,
        random_starts: cfg.rate.random_starts,
        refine: cfg.rate.refine,
        seed: cfg.seed,
        ..RateOptions::default()
    };
    let doc = match rate(&avg, &cfg.system.op, &cfg.system.x0, &target, cfg.rate.t, &opts) {
        Ok(r) => json!({
            "target": target,
            "t": cfg.rate.t,
            "value": r.value,
            "terminal": r.terminal,
            "terminal_gap": r.terminal_gap,
            "converged": r.converged,
            "control": r.control.z,
            "penalty_final": r.penalty_final,
            "restart_values": r.restart_values,
            "possible_nonuniqueness": r.possible_nonuniqueness,
            "refinement_change": r.refinement_change,
        }),
        Err(LdpError::Unreachable { gap }) => json!({
            "target": target,
            "t": cfg.rate.t,
            "value": Value::Null,
            "terminal_gap": gap,
            "converged": false,
            "control": Value::Null,
            "diagnostic": format!("unreachable: the averaged diffusion vanishes and the free path misses the target by {gap}"),
        }),
        Err(e) => return Err(e.into()),
    };
    write_json(&out.join("rate.json"), &doc)?;
    Ok(true)
}

fn laplace_cmd(cfg: &RunConfig, out: &Path) -> CmdResult {
    let h = TestFunction::parse(&cfg.laplace.h, cfg.system.n, &cfg.params)?;
    let mut w = BufWriter::new(File::create(out.join("laplace.csv"))?);
    writeln!(w, "epsilon,gamma,value,stderr,n_paths")?;
    for s in &cfg.scales {
        let dt = fitted_dt(s.gamma, cfg.laplace.dt_ratio, cfg.laplace.t);
        let r = laplace(&cfg.system, *s, cfg.laplace.t, &h, &McConfig::new(cfg.laplace.paths, dt, cfg.seed))?;
        writeln!(w, "{},{},{},{},{}", s.epsilon, s.gamma, r.estimate.get(), r.estimate.err(), cfg.laplace.paths)?;
    }
    w.flush()?;
    Ok(true)
}

fn hjb_cmd(cfg: &RunConfig, out: &Path) -> CmdResult {
    let avg = coefficients(cfg)?;
    let h = TestFunction::parse(&cfg.hjb.h, cfg.system.n, &cfg.params)?;
    let grid = HjbConfig {
        dt: cfg.hjb.dt,
        ..HjbConfig::new(cfg.hjb.dx, cfg.hjb.t, cfg.hjb.window)
    };
    let sol = solve_1d(&avg, &cfg.system.op, &h, &grid)?;
    let mut w = BufWriter::new(File::create(out.join("hjb.csv"))?);
    writeln!(w, "t,x,u")?;
    for (t, x, u) in sol.snapshots(cfg.hjb.snapshots) {
        writeln!(w, "{t},{x},{u}")?;
    }
    w.flush()?;
    Ok(true)
}

fn tightness(cfg: &RunConfig, out: &Path) -> CmdResult {
    let t = &cfg.tightness;
    let scales = match t.epsilon {
        Some(e) => *cfg
            .scales
            .iter()
            .find(|s| (s.epsilon - e).abs() < 1e-12)
            .ok_or("tightness.epsilon must appear in the scale schedule")?,
        None => first_scale(cfg),
    };
    let mc = McConfig::new(t.paths, fitted_dt(scales.gamma, 50.0, t.t), cfg.seed);
    let r = tightness_probe(&cfg.system, scales, t.t, &t.thresholds, &mc)?;
    write_json(&out.join("tightness.json"), &serde_json::to_value(&r)?)?;
    Ok(r.decreasing)
}

fn check(cfg: &RunConfig, out: &Path) -> CmdResult {
    let c = &cfg.check;
    let spec = &cfg.system;
    let mut doc = serde_json::Map::new();
    let mut ok = true;

    let diss = verify_dissipativity(spec, c.dissipativity_samples, cfg.seed)?;
    ok &= diss.passed();
    doc.insert("dissipativity".into(), serde_json::to_value(&diss)?);

    if let Some(src) = &c.zeta {
        let zeta = CoeffField::scalar(src, crate::expr::Dims::new(spec.n, spec.m), &cfg.params)?;
        let (lo, hi, count) = c.y_grid;
        if count < 2 || spec.m != 1 {
            return Err("check.y_grid needs count >= 2 and a one-dimensional fast variable".into());
        }
        let grid: Vec<(Vec<f64>, Vec<f64>)> = (0..count)
            .map(|i| (spec.x0.clone(), vec![lo + (hi - lo) * i as f64 / (count - 1) as f64]))
            .collect();
        let center = c.ball_center.clone().unwrap_or_else(|| vec![0.0; spec.m]);
        let rep = verify_lyapunov(spec, &zeta, &grid, c.l1, c.l2, (&center, c.ball_radius), LyapunovOptions::default())?;
        ok &= rep.pass;
        doc.insert("lyapunov".into(), serde_json::to_value(&rep)?);
    }

    let scale = first_scale(cfg);
    let sim = cfg.sim.resolve(scale, cfg.seed);
    let samples = spec.op.graph_sample(spec.n, cfg.seed, c.vi_samples);
    let mut worst = 0.0f64;
    let mut vi_ok = true;
    for path in 0..c.vi_paths as u64 {
        let p = run_path(spec, scale, &sim, path)?;
        let r = verify_discrete_vi(&p, &samples);
        worst = worst.max(r.max_violation);
        vi_ok &= r.pass;
    }
    ok &= vi_ok;
    doc.insert("discrete_vi".into(), json!({ "paths": c.vi_paths, "max_violation": worst, "pass": vi_ok }));

    if spec.op.is_normal_cone() {
        let a = spec.op.project(&vec![0.0; spec.n]);
        if spec.op.interior_margin(&a).is_ok() {
            let mut all = true;
            let mut min_slack = f64::INFINITY;
            for path in 0..c.vi_paths as u64 {
                let p = run_path(spec, scale, &sim, path)?;
                let r = verify_interior_estimate(&p, &spec.op, &a)?;
                all &= r.pass;
                min_slack = min_slack.min(r.lhs - r.rhs);
            }
            ok &= all;
            doc.insert("interior_estimate".into(), json!({ "a": a, "min_slack": min_slack, "pass": all }));
        }
    }
    doc.insert("pass".into(), Value::Bool(ok));
    write_json(&out.join("check.json"), &Value::Object(doc))?;
    Ok(ok)
}

fn validate(cfg: &RunConfig, out: &Path) -> CmdResult {
    let plan = Plan::new(cfg.validate.budget, cfg.seed);
    let mut results = Vec::new();
    let mut ok = true;
    for id in 1..=CRITERIA.len() as u8 {
        let r = run_criterion(id, &plan);
        println!("{} {}: {} ({:.1} s)", if r.pass { "PASS" } else { "FAIL" }, r.id, r.name, r.seconds);
        ok &= r.pass;
        results.push(serde_json::to_value(&r)?);
    }
    write_json(&out.join("validate.json"), &json!({ "plan": plan, "pass": ok, "criteria": results }))?;
    Ok(ok)
}
