//! Acceptance criteria, one pass/fail line each. Run with
//! `cargo test --release --test acceptance`.

mod common;

use std::fs;
use std::process::Command;
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsl::assignment;
use rsl::config::ExperimentConfig;
use rsl::frame_bm::{orthonormality_defect_of, simulate_trial, SdeStepConfig};
use rsl::geometry::{flow_residual, BumpConformal, ChartPoint, ExpandingSphere, MetricModel, ShrinkingHyperbolic, StaticEuclidean};
use rsl::lgeodesic::{dt1_q, dt2_q, grad1_q, grad2_q, integrate_l_geodesic, lower_bound_audit, q_distance, OdeConfig, ShootConfig};
use rsl::linalg::{vect, Vect};
use rsl::transport::transport_map;
use rsl::verification::{run_suite, McReport};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cp(m: &dyn MetricModel, x: Vect) -> ChartPoint {
    ChartPoint::from_vect(m, x).unwrap()
}

fn random_tangent<R: Rng>(m: &dyn MetricModel, x: &Vect, rng: &mut R) -> Vect {
    let b = m.tangent_basis(x);
    (0..m.dim()).map(|i| Vect::from(b.column(i)) * rng.random_range(-1.0..1.0)).sum()
}

fn flat_q_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for d in 1..=3 {
        let m = StaticEuclidean::new(d);
        for _ in 0..20 {
            let x = random_point(&m, &mut rng, 2.0);
            let y = random_point(&m, &mut rng, 2.0);
            let t1 = rng.random_range(0.0..0.5);
            let t2 = rng.random_range(t1 + 0.05..1.5);
            let q = q_distance(&m, &cp(&m, x), t1, &cp(&m, y), t2, &ShootConfig::default()).unwrap().value;
            let oracle = (x - y).norm_squared() / (2.0 * (t2.sqrt() - t1.sqrt()));
            worst = worst.max((q - oracle).abs() / (1e-4 * (1.0 + oracle)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1.0 && secs < 30.0, format!("worst |Q - oracle| / (1e-4 (1 + Q)) = {worst:.3e}, {secs:.1} s"))
}

fn exact_flow_residual() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0f64;
    for m in exact_models() {
        let m = m.as_ref();
        for _ in 0..100 {
            let tau = rng.random_range(0.0..0.95 * m.horizon().min(2.0));
            let x = cp(m, random_point(m, &mut rng, 2.0));
            worst = worst.max(flow_residual(m, tau, &x).unwrap());
        }
    }
    outcome(worst <= 1e-10, format!("max residual {worst:.3e}"))
}

fn limit_law() -> Outcome {
    let m = ExpandingSphere::new(2);
    let x = vect(&[0.0, 0.0, 1.0]);
    let y = vect(&[0.6, 0.0, 0.8]);
    let t1 = 0.3;
    let rho2 = m.distance(t1, &x, &y).powi(2);
    let errs: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|dt| {
            let t2 = t1 + dt;
            let q = q_distance(&m, &cp(&m, x), t1, &cp(&m, y), t2, &ShootConfig::default()).unwrap();
            (2.0 * (t2.sqrt() - t1.sqrt()) * q.value - rho2).abs()
        })
        .collect();
    let pass = errs[0] > errs[1] && errs[1] > errs[2] && errs[2] <= 0.02 * rho2;
    outcome(pass, format!("errors {:.3e}, {:.3e}, {:.3e}; last / rho^2 = {:.3e}", errs[0], errs[1], errs[2], errs[2] / rho2))
}

fn derivatives() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let h = 1e-4;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for m in exact_models() {
        let m = m.as_ref();
        let hi = m.horizon().min(1.0) * 0.9;
        let mut local = 0;
        while local < 10 {
            let x = random_point(m, &mut rng, 1.5);
            let y = random_point(m, &mut rng, 1.5);
            if m.id() == "sphere" && angle(&x, &y) >= 2.0 {
                continue;
            }
            let t1 = rng.random_range(0.1 * hi..0.4 * hi);
            let t2 = rng.random_range(t1 + 0.15 * hi..hi);
            let q = q_distance(m, &cp(m, x), t1, &cp(m, y), t2, &ShootConfig::default()).unwrap();
            if q.multiplicity_flag {
                continue;
            }
            let near = ShootConfig { warm_start: Some(*q.z()), multi_start: false, ..ShootConfig::default() };
            let qv = |a: Vect, ta: f64, b: Vect, tb: f64| q_distance(m, &cp(m, a), ta, &cp(m, b), tb, &near).unwrap().value;
            let g2 = grad2_q(m, &q).unwrap().components;
            let g1 = grad1_q(m, &q).unwrap().components;
            let (metric1, metric2) = (m.metric(t1, &x), m.metric(t2, &y));
            let (mut e2, mut e1) = (0.0f64, 0.0f64);
            for j in 0..m.dim() {
                let e: Vect = m.tangent_basis(&y).column(j).into();
                let fd = (qv(x, t1, displace(m, &y, &e, h), t2) - qv(x, t1, displace(m, &y, &e, -h), t2)) / (2.0 * h);
                e2 = e2.max((fd - g2.dot(&(metric2 * e))).abs() / g2.norm().max(1e-3));
                let e: Vect = m.tangent_basis(&x).column(j).into();
                let fd = (qv(displace(m, &x, &e, h), t1, y, t2) - qv(displace(m, &x, &e, -h), t1, y, t2)) / (2.0 * h);
                e1 = e1.max((fd - g1.dot(&(metric1 * e))).abs() / g1.norm().max(1e-3));
            }
            let fd2 = (qv(x, t1, y, t2 + h) - qv(x, t1, y, t2 - h)) / (2.0 * h);
            let fd1 = (qv(x, t1 + h, y, t2) - qv(x, t1 - h, y, t2)) / (2.0 * h);
            let r2 = rel_err(dt2_q(m, &q).unwrap(), fd2);
            let r1 = rel_err(dt1_q(m, &q).unwrap(), fd1);
            worst = worst.max(e1).max(e2).max(r1).max(r2);
            local += 1;
            checked += 1;
        }
    }
    outcome(worst <= 1e-3, format!("{checked} configurations, worst relative error {worst:.3e}"))
}

fn transport_isometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let m = ExpandingSphere::new(2);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let x = random_point(&m, &mut rng, 1.0);
        let z = random_tangent(&m, &x, &mut rng);
        // unit s-time from tau = 0, step 1e-3 in s
        let geo = integrate_l_geodesic(&m, &cp(&m, x), 0.0, &z, 1.0, &OdeConfig { steps: 1000 }).unwrap();
        worst = worst.max(transport_map(&m, &geo).unwrap().isometry_defect);
    }
    let flat = StaticEuclidean::new(2);
    let geo = integrate_l_geodesic(&flat, &cp(&flat, vect(&[0.3, -0.1])), 0.0, &vect(&[0.7, 0.2]), 1.0, &OdeConfig { steps: 1000 }).unwrap();
    let p = transport_map(&flat, &geo).unwrap();
    let mut flat_err = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            flat_err = flat_err.max((p.matrix[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    outcome(worst <= 1e-6 && flat_err <= 1e-12, format!("sphere defect {worst:.3e}, flat deviation from identity {flat_err:.3e}"))
}

fn frame_orthonormality() -> Outcome {
    let models: Vec<(Box<dyn MetricModel>, f64)> = vec![
        (Box::new(StaticEuclidean::new(2)), 1.0),
        (Box::new(ExpandingSphere::new(2)), 1.0),
        // metric time must stay below the horizon 1/2
        (Box::new(ShrinkingHyperbolic::new(2)), 0.45),
        (Box::new(BumpConformal::new(0.3, 0.5)), 1.0),
    ];
    let mut parts = Vec::new();
    let mut worst = 0.0f64;
    for (m, lambda) in &models {
        let m = m.as_ref();
        let x = cp(m, rsl::geometry::reference_point(m));
        let cfg = SdeStepConfig { dt: 1e-3, speed_scale: *lambda, reorthonormalize_every: 1 };
        let mut w = 0.0f64;
        for trial in 0..5 {
            let path = simulate_trial(m, &x, 1e-3, 1.001, &cfg, 106, trial).unwrap();
            assert_eq!(path.increments.len(), 1000);
            w = path.states.iter().map(|f| orthonormality_defect_of(m, f)).fold(w, f64::max);
        }
        parts.push(format!("{} {w:.1e}", m.id()));
        worst = worst.max(w);
    }
    outcome(worst <= 1e-6, format!("max defect: {}", parts.join(", ")))
}

fn config(overrides: &[&str]) -> (ExperimentConfig, rsl::geometry::SharedModel) {
    let cfg = ExperimentConfig::default().with_overrides(overrides).unwrap();
    let m = cfg.validate().unwrap();
    (cfg, m)
}

fn find<'a>(reports: &'a [McReport], name: &str) -> &'a McReport {
    reports.iter().find(|r| r.name == name).unwrap()
}

fn summary(r: &McReport) -> String {
    format!("{} {}: mean {:.4} stderr {:.4} bound {:.4} -> {:?}", r.model, r.name, r.mean, r.stderr, r.bound, r.verdict)
}

fn comparison() -> Outcome {
    let (cfg, m) = config(&["model=sphere", "n_points=20", "comparison_slack=0.05"]);
    let r = run_suite("comparison", m.as_ref(), &cfg).unwrap();
    let skipped = r[0].details["skipped"].as_u64().unwrap();
    outcome(r[0].passed() && r[0].n_trials == 20, format!("worst relative excess {:.3e} over {} checks, {skipped} skipped", r[0].mean, r[0].n_trials))
}

fn supermartingale() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut lines = Vec::new();
    for model in ["euclidean", "sphere"] {
        let (cfg, m) = config(&[&format!("model={model}"), "n_trials=10000", "s0=0.25", "t_end=1.0", "grid_points=10"]);
        let r = run_suite("supermartingale", m.as_ref(), &cfg).unwrap();
        let main = find(&r, "supermartingale");
        let power = find(&r, "supermartingale_power");
        pass &= main.passed() && main.n_trials == 10000;
        if model == "sphere" {
            pass &= power.passed();
        }
        lines.push(summary(main));
        lines.push(format!("0.01 V control {}", power.details["weakened_verdict"]));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(pass && secs < 600.0, format!("{}; {secs:.0} s", lines.join("; ")))
}

fn ito_qv() -> Outcome {
    let (cfg, m) = config(&["model=euclidean", "n_trials=2000", "qv_tol=0.15"]);
    let r = run_suite("ito_qv", m.as_ref(), &cfg).unwrap();
    let rel = r[0].details["relative_error"].as_f64().unwrap();
    outcome(r[0].passed(), format!("realized {:.4} vs predicted {:.4} (relative {rel:+.3e})", r[0].mean, r[0].bound))
}

fn theta() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for (model, y) in [("euclidean", "y=[1.0,0.0]"), ("sphere", "y=[0.0,0.0,-1.0]")] {
        let (cfg, m) = config(&[&format!("model={model}"), y, "n_trials=2000", "theta_points=5"]);
        let r = run_suite("theta", m.as_ref(), &cfg).unwrap();
        for name in ["theta_monotone", "theta_initial", "theta_independent_control"] {
            let rep = find(&r, name);
            pass &= rep.passed();
            lines.push(summary(rep));
        }
        lines.push(format!("{} fallback rate {:.4}", model, find(&r, "theta_monotone").details["run"]["fallback_rate"]));
    }
    outcome(pass, lines.join("; "))
}

fn brute_force(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                go(cost, row + 1, used, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
    best
}

fn assignment_solver() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(112);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=7);
        let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let (total, perm) = assignment::solve(&cost).unwrap();
        let again: f64 = perm.iter().enumerate().fold(0.0, |acc, (i, j)| acc + cost[i][*j]);
        if total != brute_force(&cost) || again != total {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} of 200 differ from the brute-force minimum"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let runs: [(&str, &[&str]); 4] = [
        ("supermartingale", &["n_trials=300"]),
        ("ito_qv", &["model=euclidean", "n_trials=100"]),
        ("comparison", &["n_points=5"]),
        ("theta", &["n_trials=200", "y=[0.0,0.0,-1.0]"]),
    ];
    let mut differing = Vec::new();
    for (suite, sets) in runs {
        let mut outputs = Vec::new();
        for (k, threads) in ["1", "2"].iter().enumerate() {
            let out = dir.path().join(format!("{suite}-{k}"));
            let status = Command::new(env!("CARGO_BIN_EXE_rsl"))
                .args(["verify", "--suite", suite, "--threads", threads, "--set", "seed=13"])
                .args(sets)
                .arg("--out")
                .arg(&out)
                .env_remove("RSL_SEED")
                .status()
                .unwrap();
            assert!(status.code().is_some_and(|c| c <= 1));
            outputs.push(fs::read(out.join("results.json")).unwrap());
        }
        if outputs[0] != outputs[1] {
            differing.push(suite);
        }
    }
    outcome(differing.is_empty(), format!("suites with differing results.json: {differing:?}"))
}

fn lower_bound() -> Outcome {
    let a = lower_bound_audit();
    outcome(a.checked > 0 && a.violations == 0 && a.worst_slack >= -1e-6, format!("{} Q values audited, worst slack {:.3e}", a.checked, a.worst_slack))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1 flat-space Q oracle", flat_q_oracle),
        ("2 exact-flow residual", exact_flow_residual),
        ("3 L-geodesic limit law", limit_law),
        ("4 derivatives of Q", derivatives),
        ("5 space-time transport isometry", transport_isometry),
        ("6 frame orthonormality", frame_orthonormality),
        ("8 comparison inequality", comparison),
        ("9 supermartingale", supermartingale),
        ("10 Ito quadratic variation", ito_qv),
        ("11 Theta monotonicity", theta),
        ("12 assignment solver", assignment_solver),
        ("13 determinism", determinism),
        // last, so that it covers every Q computed above
        ("7 lower bound on Q", lower_bound),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("[{verdict}] {name}: {} ({:.1} s)", o.detail, start.elapsed().as_secs_f64());
        failed += usize::from(!o.pass);
    }
    println!("{failed} criteria failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
