//! Parallel-displacement coupling of a `g_{tau1 t}`- and a
//! `g_{tau2 t}`-Brownian motion, and the L-transportation cost built from it.
//!
//! Off the L-cut locus the fast process is driven by `dB~ = u~^{-1} P u dB`,
//! where `P` is space-time parallel transport along the minimizing L-geodesic
//! from `(X, tau1 t)` to `(X~, tau2 t)`. In frame coordinates this is an
//! orthogonal `d x d` matrix, which we keep between `Q` refreshes. Whenever the
//! minimizer is not unique or shooting fails, the fast process uses an
//! independent increment instead.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::error::{LabError, Result};
use crate::frame_bm::{clock_grid, gaussian_increment, init_frame, step, trial_rng, OrthonormalFrame, SdeStepConfig};
use crate::geometry::{ChartPoint, MetricModel};
use crate::lgeodesic::{q_distance, QResult, ShootConfig};
use crate::linalg::{polar_orthogonal, Mat, Vect};
use crate::transport::transport_map;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CouplingConfig {
    pub tau_bar1: f64,
    pub tau_bar2: f64,
    /// Start clock.
    pub s: f64,
    pub t_end: f64,
    pub dt: f64,
    pub n_trials: usize,
    /// Largest accepted endpoint mismatch of the minimizing geodesic.
    pub cut_fallback_tol: f64,
    /// Steps between `Q` refreshes.
    pub q_every: usize,
    /// Consecutive `Q` failures after which a trial is aborted.
    pub max_q_failures: usize,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            tau_bar1: 0.5,
            tau_bar2: 1.0,
            s: 0.25,
            t_end: 1.0,
            dt: 5e-3,
            n_trials: 2000,
            cut_fallback_tol: 1e-6,
            q_every: 5,
            max_q_failures: 20,
        }
    }
}

impl CouplingConfig {
    pub fn validate(&self, model: &dyn MetricModel) -> Result<()> {
        let err = |m: String| Err(LabError::Invalid(m));
        if !(0.0 < self.tau_bar1 && self.tau_bar1 < self.tau_bar2) {
            return err(format!("need 0 < tau_bar1 < tau_bar2, got {} and {}", self.tau_bar1, self.tau_bar2));
        }
        if !(0.0 < self.s && self.s < self.t_end && self.tau_bar2 * self.t_end < model.horizon()) {
            return err(format!("need 0 < s < t_end < T / tau_bar2, got s={}, t_end={}", self.s, self.t_end));
        }
        if !(self.dt > 0.0 && self.dt <= 1e-2) || self.q_every == 0 || self.n_trials == 0 {
            return err("dt must lie in (0, 1e-2]; q_every and n_trials must be positive".into());
        }
        Ok(())
    }

    fn sde(&self, lambda: f64) -> SdeStepConfig {
        SdeStepConfig { dt: self.dt, speed_scale: lambda, reorthonormalize_every: 1 }
    }
}

#[derive(Clone, Debug)]
pub struct CoupledState {
    /// Common clock.
    pub t: f64,
    /// Slow process at metric time `tau_bar1 t`.
    pub x: OrthonormalFrame,
    /// Fast process at metric time `tau_bar2 t`.
    pub y: OrthonormalFrame,
    pub q: Option<QResult>,
    /// `u~^{-1} P u` in frame coordinates, when the coupling is active.
    pub noise_map: Option<Mat>,
    pub fallback_active: bool,
    pub q_failures: usize,
}

impl CoupledState {
    pub fn q_value(&self) -> Option<f64> {
        self.q.as_ref().map(|q| q.value)
    }
}

/// Initial coupled state at clock `cfg.s`.
pub fn init_state(model: &dyn MetricModel, x: &ChartPoint, y: &ChartPoint, cfg: &CouplingConfig, shoot: &ShootConfig) -> Result<CoupledState> {
    cfg.validate(model)?;
    let fx = init_frame(model, x, cfg.tau_bar1 * cfg.s)?;
    let fy = init_frame(model, y, cfg.tau_bar2 * cfg.s)?;
    let mut state = CoupledState { t: cfg.s, x: fx, y: fy, q: None, noise_map: None, fallback_active: true, q_failures: 0 };
    // first evaluation probes all starts so that the branch is the global one
    let first = ShootConfig { multi_start: true, ..shoot.clone() };
    refresh(model, &mut state, cfg, &first)?;
    Ok(state)
}

/// Recomputes `Q` and the noise map at the current state.
fn refresh(model: &dyn MetricModel, state: &mut CoupledState, cfg: &CouplingConfig, shoot: &ShootConfig) -> Result<()> {
    let (ta, tb) = (cfg.tau_bar1 * state.t, cfg.tau_bar2 * state.t);
    let warm = state.q.as_ref().map(|q| model.project_tangent(state.x.point(), q.z()));
    let cfg_q = ShootConfig { warm_start: warm, ..shoot.clone() };
    match q_distance(model, &state.x.base, ta, &state.y.base, tb, &cfg_q) {
        Ok(q) => {
            state.q_failures = 0;
            let end_err = (q.geodesic.path.end() - state.y.point()).norm();
            let usable = !q.multiplicity_flag && end_err <= cfg.cut_fallback_tol;
            state.noise_map = if usable {
                let p = transport_map(model, &q.geodesic)?;
                let gy = model.metric(tb, state.y.point());
                let raw = state.y.columns.transpose() * gy * p.matrix * state.x.columns;
                Some(polar_orthogonal(&raw, model.dim()))
            } else {
                None
            };
            state.fallback_active = !usable;
            state.q = Some(q);
            Ok(())
        }
        Err(LabError::ShootingFailed { best_residual }) => {
            state.q_failures += 1;
            state.noise_map = None;
            state.fallback_active = true;
            if state.q_failures > cfg.max_q_failures {
                return Err(LabError::ShootingFailed { best_residual });
            }
            Ok(())
        }
        Err(e) => Err(e),
    }
}

/// One coupled step of clock length `h`. `db` drives the slow process;
/// `db_indep` is used by the fast process only while the fallback is active.
pub fn coupled_step(model: &dyn MetricModel, state: &CoupledState, db: &Vect, db_indep: &Vect, h: f64, cfg: &CouplingConfig) -> Result<CoupledState> {
    let dbt = match (&state.noise_map, state.fallback_active) {
        (Some(o), false) => o * db,
        _ => *db_indep,
    };
    let x = step(model, &state.x, db, &SdeStepConfig { dt: h, ..cfg.sde(cfg.tau_bar1) })?;
    let y = step(model, &state.y, &dbt, &SdeStepConfig { dt: h, ..cfg.sde(cfg.tau_bar2) })?;
    Ok(CoupledState { t: state.t + h, x, y, ..state.clone() })
}

/// `J(t) = d / sqrt(t) (sqrt(tau_bar2) - sqrt(tau_bar1)) - Q / (2 t)`, the
/// bound on the drift of `t -> Q(X_t, tau_bar1 t; X~_t, tau_bar2 t)`.
///
/// In flat space the coupled drift equals `J` exactly, which makes
/// `Theta` constant along the coupling.
pub fn drift_bound(d: usize, tau_bar1: f64, tau_bar2: f64, t: f64, q: f64) -> f64 {
    d as f64 / t.sqrt() * (tau_bar2.sqrt() - tau_bar1.sqrt()) - q / (2.0 * t)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CouplingRecord {
    pub t: f64,
    pub q: f64,
    pub j: f64,
    pub fallback: bool,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub x: Vect,
    pub y: Vect,
    pub q: f64,
}

#[derive(Clone, Debug)]
pub struct CouplingTrajectory {
    pub trial: u64,
    /// One record per `Q` refresh.
    pub records: Vec<CouplingRecord>,
    /// States at the requested clock times.
    pub snapshots: Vec<Snapshot>,
    pub fallback_steps: usize,
    pub total_steps: usize,
}

/// Step grid from `cfg.s` to `cfg.t_end` that lands on every `record_times`
/// entry, spacing at most `cfg.dt`.
fn step_grid(cfg: &CouplingConfig, record_times: &[f64]) -> Vec<f64> {
    let mut marks: Vec<f64> = std::iter::once(cfg.s)
        .chain(record_times.iter().copied().filter(|t| *t > cfg.s && *t < cfg.t_end))
        .chain(std::iter::once(cfg.t_end))
        .collect();
    marks.dedup();
    let mut grid = vec![cfg.s];
    for w in marks.windows(2) {
        grid.extend(clock_grid(w[0], w[1], cfg.dt).into_iter().skip(1));
    }
    grid
}

/// Runs one coupled trial. With `independent` set the fast process always uses
/// its own noise (the uncoupled control).
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    model: &dyn MetricModel,
    x: &ChartPoint,
    y: &ChartPoint,
    cfg: &CouplingConfig,
    shoot: &ShootConfig,
    record_times: &[f64],
    seed: u64,
    trial: u64,
    independent: bool,
) -> Result<CouplingTrajectory> {
    let d = model.dim();
    let grid = step_grid(cfg, record_times);
    let mut rng = trial_rng(seed, trial, 0);
    let mut state = init_state(model, x, y, cfg, shoot)?;
    if independent {
        state.noise_map = None;
        state.fallback_active = true;
    }
    let mut out = CouplingTrajectory { trial, records: Vec::new(), snapshots: Vec::new(), fallback_steps: 0, total_steps: 0 };
    let record = |state: &CoupledState, out: &mut CouplingTrajectory| {
        if let Some(q) = state.q_value() {
            out.records.push(CouplingRecord {
                t: state.t,
                q,
                j: drift_bound(d, cfg.tau_bar1, cfg.tau_bar2, state.t, q),
                fallback: state.fallback_active,
            });
        }
    };
    let snapshot = |state: &CoupledState, out: &mut CouplingTrajectory| {
        if record_times.iter().any(|t| (t - state.t).abs() <= 1e-12 * (1.0 + t)) {
            out.snapshots.push(Snapshot { t: state.t, x: *state.x.point(), y: *state.y.point(), q: state.q_value().unwrap_or(f64::NAN) });
        }
    };
    record(&state, &mut out);
    snapshot(&state, &mut out);
    let mut since_q = 0;
    for k in 1..grid.len() {
        let h = grid[k] - grid[k - 1];
        // both increments are always drawn so the stream does not depend on
        // the fallback history
        let db = gaussian_increment(&mut rng, d, h);
        let db_indep = gaussian_increment(&mut rng, d, h);
        out.total_steps += 1;
        if state.fallback_active {
            out.fallback_steps += 1;
        }
        state = coupled_step(model, &state, &db, &db_indep, h, cfg)?;
        since_q += 1;
        let at_mark = record_times.iter().any(|t| (t - grid[k]).abs() <= 1e-12 * (1.0 + t)) || k + 1 == grid.len();
        let due = if independent { at_mark } else { since_q >= cfg.q_every || state.fallback_active || at_mark };
        if due {
            state.t = grid[k];
            refresh(model, &mut state, cfg, shoot)?;
            if independent {
                state.noise_map = None;
                state.fallback_active = true;
            }
            since_q = 0;
            record(&state, &mut out);
        }
        state.t = grid[k];
        snapshot(&state, &mut out);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct CouplingRun {
    pub trajectories: Vec<CouplingTrajectory>,
    /// Trials aborted after repeated `Q` failures or domain exits.
    pub aborted: usize,
}

impl CouplingRun {
    pub fn fallback_rate(&self) -> f64 {
        let (f, n) = self.trajectories.iter().fold((0, 0), |(f, n), t| (f + t.fallback_steps, n + t.total_steps));
        if n == 0 {
            0.0
        } else {
            f as f64 / n as f64
        }
    }
}

/// Runs `cfg.n_trials` coupled trials in parallel; results are in trial order.
#[allow(clippy::too_many_arguments)]
pub fn run_coupling(
    model: &dyn MetricModel,
    x: &ChartPoint,
    y: &ChartPoint,
    cfg: &CouplingConfig,
    shoot: &ShootConfig,
    record_times: &[f64],
    seed: u64,
    independent: bool,
) -> Result<CouplingRun> {
    cfg.validate(model)?;
    let results: Vec<Result<CouplingTrajectory>> = (0..cfg.n_trials as u64)
        .into_par_iter()
        .map(|k| run_trial(model, x, y, cfg, shoot, record_times, seed, k, independent))
        .collect();
    let mut trajectories = Vec::with_capacity(results.len());
    let mut aborted = 0;
    for r in results {
        match r {
            Ok(t) => trajectories.push(t),
            Err(LabError::ShootingFailed { .. }) | Err(LabError::DomainExit(_)) => aborted += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(CouplingRun { trajectories, aborted })
}

/// Empirical L-transportation cost between two equally sized samples:
/// `(1/n) min_sigma sum_i Q(x_i, ta; y_sigma(i), tb)`.
pub fn empirical_wl(model: &dyn MetricModel, xs: &[ChartPoint], ta: f64, ys: &[ChartPoint], tb: f64, shoot: &ShootConfig) -> Result<f64> {
    let n = xs.len();
    if n == 0 || n != ys.len() || n > 256 {
        return Err(LabError::Invalid(format!("need equal sample counts in 1..=256, got {} and {}", n, ys.len())));
    }
    let cost: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| ys.iter().map(|y| q_distance(model, x, ta, y, tb, shoot).map(|q| q.value)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    let (total, _) = assignment::solve(&cost)?;
    Ok(total / n as f64)
}

/// `Theta = 2 (sqrt(tb t) - sqrt(ta t)) W - 2 d (sqrt(tb t) - sqrt(ta t))^2`.
pub fn theta_from_cost(d: usize, tau_bar1: f64, tau_bar2: f64, t: f64, w: f64) -> f64 {
    let gap = (tau_bar2 * t).sqrt() - (tau_bar1 * t).sqrt();
    2.0 * gap * w - 2.0 * d as f64 * gap * gap
}

/// Normalized L-transportation cost at clock `t` from samples of the two
/// marginals.
pub fn theta(model: &dyn MetricModel, t: f64, xs: &[ChartPoint], ys: &[ChartPoint], cfg: &CouplingConfig, shoot: &ShootConfig) -> Result<f64> {
    let w = empirical_wl(model, xs, cfg.tau_bar1 * t, ys, cfg.tau_bar2 * t, shoot)?;
    Ok(theta_from_cost(model.dim(), cfg.tau_bar1, cfg.tau_bar2, t, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ExpandingSphere, StaticEuclidean};

    fn flat_setup() -> (StaticEuclidean, ChartPoint, ChartPoint) {
        let m = StaticEuclidean::new(2);
        let x = ChartPoint::new(&m, &[0.0, 0.0]).unwrap();
        let y = ChartPoint::new(&m, &[1.0, 0.0]).unwrap();
        (m, x, y)
    }

    #[test]
    fn noise_map_is_an_isometry() {
        let m = ExpandingSphere::new(2);
        let x = ChartPoint::new(&m, &[0.0, 0.0, 1.0]).unwrap();
        let y = ChartPoint::new(&m, &[0.0, 0.6, 0.8]).unwrap();
        let cfg = CouplingConfig { s: 0.3, ..Default::default() };
        let st = init_state(&m, &x, &y, &cfg, &ShootConfig::fast()).unwrap();
        let o = st.noise_map.expect("coupling active");
        let db = Vect::new(0.3, -1.2, 0.0, 0.0);
        assert!(((o * db).norm() - db.norm()).abs() < 1e-12);
        // before projection the transported frame is already nearly orthogonal
        let q = st.q.unwrap();
        let p = transport_map(&m, &q.geodesic).unwrap();
        let raw = st.y.columns.transpose() * m.metric(cfg.tau_bar2 * cfg.s, st.y.point()) * p.matrix * st.x.columns;
        assert!(((raw * db).norm() - db.norm()).abs() < 1e-6);
    }

    /// In flat space `P` is the identity, so both processes share the noise:
    /// `X~ - y = sqrt(tau_bar2 / tau_bar1) (X - x)`.
    #[test]
    fn flat_coupling_shares_the_noise() {
        let (m, x, y) = flat_setup();
        let cfg = CouplingConfig { s: 0.2, t_end: 0.6, n_trials: 1, ..Default::default() };
        let traj = run_trial(&m, &x, &y, &cfg, &ShootConfig::fast(), &[0.6], 5, 0, false).unwrap();
        let snap = traj.snapshots.last().unwrap();
        let ratio = (cfg.tau_bar2 / cfg.tau_bar1).sqrt();
        assert!(((snap.y - y.coords) - (snap.x - x.coords) * ratio).norm() < 1e-12);
        assert_eq!(traj.fallback_steps, 0);
    }

    #[test]
    fn flat_theta_at_start_matches_closed_form() {
        let (m, x, y) = flat_setup();
        let cfg = CouplingConfig::default();
        let th = theta(&m, cfg.s, &[x], &[y], &cfg, &ShootConfig::fast()).unwrap();
        let gap = (cfg.tau_bar2 * cfg.s).sqrt() - (cfg.tau_bar1 * cfg.s).sqrt();
        let q = 1.0 / (2.0 * gap);
        assert!((th - (2.0 * gap * q - 4.0 * gap * gap)).abs() < 1e-10);
        let th0 = theta(&m, cfg.s, &[x], &[x], &cfg, &ShootConfig::fast()).unwrap();
        assert!((th0 + 4.0 * gap * gap).abs() < 1e-12);
    }

    #[test]
    fn pair_average_bounds_empirical_cost() {
        let (m, _, _) = flat_setup();
        let xs: Vec<ChartPoint> = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]].iter().map(|c| ChartPoint::new(&m, c).unwrap()).collect();
        let ys: Vec<ChartPoint> = [[0.0, 2.1], [0.1, 0.0], [1.0, 0.2]].iter().map(|c| ChartPoint::new(&m, c).unwrap()).collect();
        let shoot = ShootConfig::fast();
        let w = empirical_wl(&m, &xs, 0.2, &ys, 0.5, &shoot).unwrap();
        let pair: f64 = xs.iter().zip(&ys).map(|(a, b)| q_distance(&m, a, 0.2, b, 0.5, &shoot).unwrap().value).sum::<f64>() / 3.0;
        assert!(w <= pair);
        let single = empirical_wl(&m, &xs[..1], 0.2, &ys[..1], 0.5, &shoot).unwrap();
        assert_eq!(single, q_distance(&m, &xs[0], 0.2, &ys[0], 0.5, &shoot).unwrap().value);
    }

    #[test]
    fn trials_are_deterministic_and_land_on_record_times() {
        let m = ExpandingSphere::new(2);
        let x = ChartPoint::new(&m, &[0.0, 0.0, 1.0]).unwrap();
        let y = ChartPoint::new(&m, &[1.0, 0.0, 0.0]).unwrap();
        let cfg = CouplingConfig { s: 0.25, t_end: 0.5, ..Default::default() };
        let times = [0.25, 0.375, 0.5];
        let a = run_trial(&m, &x, &y, &cfg, &ShootConfig::fast(), &times, 3, 7, false).unwrap();
        let b = run_trial(&m, &x, &y, &cfg, &ShootConfig::fast(), &times, 3, 7, false).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.snapshots.iter().map(|s| s.t).collect::<Vec<_>>(), times.to_vec());
    }

    #[test]
    fn rejects_bad_configs() {
        let (m, x, y) = flat_setup();
        let bad = CouplingConfig { tau_bar1: 1.0, tau_bar2: 0.5, ..Default::default() };
        assert!(init_state(&m, &x, &y, &bad, &ShootConfig::fast()).is_err());
    }
}
