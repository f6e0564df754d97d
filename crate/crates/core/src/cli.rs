//! Command-line front end: `simulate`, `qdist`, `couple`, `verify`, `report`.
//!
//! Exit codes: 0 success, 1 failed suite or runtime error, 2 invalid
//! configuration or usage.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::coupling::{run_coupling, theta_from_cost};
use crate::error::LabError;
use crate::frame_bm::{orthonormality_defect_of, simulate_trial, write_paths_csv};
use crate::geometry::MetricModel;
use crate::io::fmt_f64;
use crate::lgeodesic::{dt1_q, dt2_q, grad1_q, grad2_q, q_distance, q_lower_bound};
use crate::linalg::{to_vec, Vect};
use crate::verification::{run_suite, Verdict};

#[derive(Debug, Parser)]
#[command(name = "rsl", version, about = "L-geometry and Brownian motion along backwards Ricci flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `key=value` (dotted keys for nested tables).
    #[arg(long = "set", global = true, num_args = 1.., value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; all available cores by default.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate g_t-Brownian paths with their frames.
    Simulate,
    /// L-distance and minimizing L-geodesic between two space-time points.
    Qdist,
    /// Run the parallel-displacement coupling.
    Couple,
    /// Run a verification suite.
    Verify {
        #[arg(long)]
        suite: Option<String>,
    },
    /// Tidy CSV from a previous `verify` output directory.
    Report {
        /// Directory holding `results.json`; defaults to `--out`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Invalid(_) | LabError::Unknown { .. } | LabError::OutOfDomain(..) | LabError::TimeOutOfRange { .. } => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Run(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(format!("i/o: {e}"))
    }
}

/// Parses `argv` (program name first), runs, and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(Failure::Config(m)) => {
            eprintln!("invalid configuration: {m}");
            2
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let base = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    let mut cfg = base.with_overrides(&cli.set)?;
    if let Ok(seed) = std::env::var("RSL_SEED") {
        cfg.seed = seed.trim().parse().map_err(|_| Failure::Config(format!("RSL_SEED `{seed}` is not a u64")))?;
    }
    if let Command::Verify { suite: Some(s) } = &cli.command {
        cfg.suite = s.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = load_config(cli)?;
    if let Command::Report { input } = &cli.command {
        return report(input.as_deref().unwrap_or(&cli.out), &cli.out);
    }
    let model = cfg.validate()?;
    fs::create_dir_all(&cli.out)?;
    write_json(&cli.out.join("config-echo.json"), &serde_json::to_value(&cfg).expect("config serializes"))?;
    let m = model.as_ref();
    let (results, passed) = match &cli.command {
        Command::Simulate => (simulate(m, &cfg, &cli.out)?, true),
        Command::Qdist => (qdist(m, &cfg, &cli.out)?, true),
        Command::Couple => (couple(m, &cfg, &cli.out)?, true),
        Command::Verify { .. } => {
            let reports = run_suite(&cfg.suite, m, &cfg)?;
            let passed = reports.iter().all(|r| r.verdict == Verdict::Pass);
            (serde_json::to_value(&reports).expect("reports serialize"), passed)
        }
        Command::Report { .. } => unreachable!("handled above"),
    };
    write_json(&cli.out.join("results.json"), &results)?;
    Ok(passed)
}

fn write_json(path: &Path, v: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(v).expect("json serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, Failure> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn vec_of(m: &dyn MetricModel, v: &Vect) -> Vec<f64> {
    to_vec(v, m.ambient_dim())
}

const SIM_CHUNK: u64 = 64;

fn simulate(m: &dyn MetricModel, cfg: &ExperimentConfig, out: &Path) -> Result<Value, Failure> {
    let x = cfg.start_point(m)?;
    let sde = cfg.sde();
    let mut csv = create(&out.join("paths.csv"))?;
    let (mut discarded, mut max_defect, mut steps) = (0, 0.0f64, 0);
    let mut end_sum = Vect::zeros();
    let n = cfg.n_trials as u64;
    for start in (0..n).step_by(SIM_CHUNK as usize) {
        let paths = (start..(start + SIM_CHUNK).min(n))
            .into_par_iter()
            .map(|k| simulate_trial(m, &x, cfg.s0, cfg.t_end, &sde, cfg.seed, k).map(|p| (k, p)))
            .collect::<Result<Vec<_>, _>>()?;
        for (_, p) in &paths {
            discarded += p.discarded;
            steps = p.increments.len();
            end_sum += p.states.last().expect("non-empty path").point();
            max_defect = p.states.iter().map(|f| orthonormality_defect_of(m, f)).fold(max_defect, f64::max);
        }
        write_paths_csv(m, &paths, start == 0, &mut csv)?;
    }
    csv.flush()?;
    Ok(json!({
        "command": "simulate",
        "model": m.id(),
        "n_trials": cfg.n_trials,
        "steps": steps,
        "discarded": discarded,
        "max_orthonormality_defect": max_defect,
        "mean_end_point": vec_of(m, &(end_sum / n as f64)),
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
    }))
}

fn qdist(m: &dyn MetricModel, cfg: &ExperimentConfig, out: &Path) -> Result<Value, Failure> {
    let x = cfg.start_point(m)?;
    let y = cfg.second_point(m)?;
    let q = q_distance(m, &x, cfg.tau1, &y, cfg.tau2, &cfg.shoot.accurate())?;
    let opt = |r: crate::Result<f64>| r.ok();
    let grad2 = grad2_q(m, &q).ok().map(|v| vec_of(m, &v.components));
    let grad1 = grad1_q(m, &q).ok().map(|v| vec_of(m, &v.components));
    let lower = m
        .exact_flow()
        .then(|| q_lower_bound(m, cfg.tau1, cfg.tau2, &x, &y, m.curvature_bound_on(0.0, cfg.tau2)));
    let path = &q.geodesic.path;
    let mut csv = create(&out.join("geodesic.csv"))?;
    let n = m.ambient_dim();
    let mut header = vec!["s".to_string(), "tau".into()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("v{i}")));
    writeln!(csv, "{}", header.join(","))?;
    for k in 0..path.len() {
        let mut row = vec![fmt_f64(path.s[k]), fmt_f64(path.tau(k))];
        row.extend((0..n).map(|i| fmt_f64(path.points[k][i])));
        row.extend((0..n).map(|i| fmt_f64(path.velocities[k][i])));
        writeln!(csv, "{}", row.join(","))?;
    }
    csv.flush()?;
    Ok(json!({
        "command": "qdist",
        "model": m.id(),
        "x": x.to_vec(m),
        "tau1": cfg.tau1,
        "y": y.to_vec(m),
        "tau2": cfg.tau2,
        "value": q.value,
        "z": vec_of(m, q.z()),
        "residual": q.geodesic.residual,
        "multiplicity_flag": q.multiplicity_flag,
        "used_fallback": q.used_fallback,
        "candidates": q.candidates.iter().map(|c| json!({ "z": vec_of(m, &c.z), "length": c.length })).collect::<Vec<_>>(),
        "grad_y": grad2,
        "grad_x": grad1,
        "d_tau2": opt(dt2_q(m, &q)),
        "d_tau1": opt(dt1_q(m, &q)),
        "lower_bound": lower,
        "config_hash": cfg.hash(),
    }))
}

fn couple(m: &dyn MetricModel, cfg: &ExperimentConfig, out: &Path) -> Result<Value, Failure> {
    let x = cfg.start_point(m)?;
    let y = cfg.second_point(m)?;
    let cc = cfg.coupling();
    let times = cfg.theta_times();
    let run = run_coupling(m, &x, &y, &cc, &cfg.shoot.monte_carlo(), &times, cfg.seed, false)?;
    let mut records = create(&out.join("records.csv"))?;
    writeln!(records, "trial,t,q,j,fallback")?;
    let mut snaps = create(&out.join("snapshots.csv"))?;
    let n = m.ambient_dim();
    let mut header = vec!["trial".to_string(), "t".into()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("y{i}")));
    header.push("q".into());
    writeln!(snaps, "{}", header.join(","))?;
    for tr in &run.trajectories {
        for r in &tr.records {
            writeln!(records, "{},{},{},{},{}", tr.trial, fmt_f64(r.t), fmt_f64(r.q), fmt_f64(r.j), u8::from(r.fallback))?;
        }
        for s in &tr.snapshots {
            let mut row = vec![tr.trial.to_string(), fmt_f64(s.t)];
            row.extend((0..n).map(|i| fmt_f64(s.x[i])));
            row.extend((0..n).map(|i| fmt_f64(s.y[i])));
            row.push(fmt_f64(s.q));
            writeln!(snaps, "{}", row.join(","))?;
        }
    }
    records.flush()?;
    snaps.flush()?;
    let count = run.trajectories.len().max(1) as f64;
    let mean_q: Vec<f64> = (0..times.len())
        .map(|k| run.trajectories.iter().map(|tr| tr.snapshots[k].q).sum::<f64>() / count)
        .collect();
    let pair_theta: Vec<f64> = times
        .iter()
        .zip(&mean_q)
        .map(|(t, q)| theta_from_cost(m.dim(), cc.tau_bar1, cc.tau_bar2, *t, *q))
        .collect();
    Ok(json!({
        "command": "couple",
        "model": m.id(),
        "n_trials": cc.n_trials,
        "aborted": run.aborted,
        "fallback_rate": run.fallback_rate(),
        "times": times,
        "mean_q": mean_q,
        "pair_theta": pair_theta,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
    }))
}

fn num(v: &Value) -> String {
    v.as_f64().map(fmt_f64).unwrap_or_default()
}

/// `report.csv` with one row per report, plus `theta_curve.csv` when a
/// transportation-cost curve is present.
fn report(input: &Path, out: &Path) -> Result<bool, Failure> {
    let path = input.join("results.json");
    let text = fs::read_to_string(&path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let Some(reports) = doc.as_array() else {
        return Err(Failure::Config(format!("{} is not a verification report array", path.display())));
    };
    fs::create_dir_all(out)?;
    let mut csv = create(&out.join("report.csv"))?;
    writeln!(csv, "name,model,n_trials,mean,stderr,bound,verdict")?;
    let mut curve = None;
    for r in reports {
        let s = |k: &str| r[k].as_str().unwrap_or_default().to_string();
        writeln!(csv, "{},{},{},{},{},{},{}", s("name"), s("model"), r["n_trials"], num(&r["mean"]), num(&r["stderr"]), num(&r["bound"]), s("verdict"))?;
        if curve.is_none() {
            curve = r["details"]["run"].get("curve").cloned();
        }
    }
    csv.flush()?;
    if let Some(c) = curve {
        let mut csv = create(&out.join("theta_curve.csv"))?;
        writeln!(csv, "t,theta,stderr,pair_theta")?;
        let col = |k: &str| c[k].as_array().cloned().unwrap_or_default();
        let (t, m, se, p) = (col("times"), col("mean"), col("stderr"), col("pair_mean"));
        for k in 0..t.len() {
            writeln!(csv, "{},{},{},{}", num(&t[k]), num(&m[k]), num(&se[k]), num(&p[k]))?;
        }
        csv.flush()?;
    }
    Ok(true)
}
