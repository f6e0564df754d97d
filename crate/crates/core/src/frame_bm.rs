//! `g_t`-Brownian motion as the projection of the horizontal frame-bundle SDE.
//!
//! The state is a point together with a `g_t`-orthonormal frame. Each step
//! moves the point by `sqrt(2 lambda) u dB` (Stratonovich, Heun
//! predictor-corrector), parallel-transports the frame columns with the
//! Christoffel contraction, and applies the vertical drift
//! `-1/2 lambda (d_tau g)(u e_a, u e_b)` in Itô form. That drift is what keeps
//! the frame orthonormal while the metric evolves; Gram-Schmidt then removes
//! the discretization leakage.
//!
//! `lambda` is a time change: the metric time advances by `lambda dt` per
//! clock step, so `lambda = 1` gives the plain `g_t`-Brownian motion and
//! `lambda = tau_bar` gives the `g_{tau_bar t}`-Brownian motion with generator
//! `tau_bar Delta_{tau_bar t}` used by the coupling.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{LabError, Result};
use crate::geometry::{check_point, check_time, ChartPoint, MetricModel};
use crate::linalg::{gram_schmidt, orthonormality_defect, Mat, Vect};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrthonormalFrame {
    pub base: ChartPoint,
    /// Frame vectors `u e_i` in the first `d` columns.
    pub columns: Mat,
    /// Metric time of the frame.
    pub time: f64,
    steps_since_gs: u32,
}

impl OrthonormalFrame {
    pub fn point(&self) -> &Vect {
        &self.base.coords
    }

    pub fn column(&self, i: usize) -> Vect {
        self.columns.column(i).into()
    }

    /// `u xi = sum_i xi_i u e_i`.
    pub fn apply(&self, xi: &Vect) -> Vect {
        self.columns * xi
    }

    /// `u^{-1} w`, the coefficients `<u e_i, w>_g`.
    pub fn inverse_apply(&self, model: &dyn MetricModel, w: &Vect) -> Vect {
        let gw = model.metric(self.time, self.point()) * w;
        let mut out = Vect::zeros();
        for i in 0..model.dim() {
            out[i] = self.column(i).dot(&gw);
        }
        out
    }
}

pub fn orthonormality_defect_of(model: &dyn MetricModel, frame: &OrthonormalFrame) -> f64 {
    orthonormality_defect(&model.metric(frame.time, frame.point()), &frame.columns, model.dim())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdeStepConfig {
    pub dt: f64,
    /// `lambda`, the factor in the `sqrt(2 lambda)` noise amplitude.
    pub speed_scale: f64,
    pub reorthonormalize_every: u32,
}

impl Default for SdeStepConfig {
    fn default() -> Self {
        Self { dt: 1e-3, speed_scale: 1.0, reorthonormalize_every: 1 }
    }
}

impl SdeStepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 1e-2) {
            return Err(LabError::Invalid(format!("dt must lie in (0, 1e-2], got {}", self.dt)));
        }
        if !(self.speed_scale > 0.0) || self.reorthonormalize_every == 0 {
            return Err(LabError::Invalid("speed_scale must be positive and reorthonormalize_every >= 1".into()));
        }
        Ok(())
    }
}

/// Gram-Schmidt of the coordinate (tangent) basis with respect to `g_{t0}`.
pub fn init_frame(model: &dyn MetricModel, x: &ChartPoint, t0: f64) -> Result<OrthonormalFrame> {
    check_time(model, t0)?;
    check_point(model, x)?;
    let g = model.metric(t0, &x.coords);
    let columns = gram_schmidt(&g, &model.tangent_basis(&x.coords), model.dim()).ok_or(LabError::DegenerateMetric)?;
    Ok(OrthonormalFrame { base: *x, columns, time: t0, steps_since_gs: 0 })
}

/// Stratonovich vector field: point velocity and frame column velocities for
/// the noise direction `xi` (already scaled).
fn horizontal(model: &dyn MetricModel, tau: f64, x: &Vect, cols: &Mat, xi: &Vect, d: usize) -> (Vect, Mat) {
    let v = cols * xi;
    let mut dcols = Mat::zeros();
    for i in 0..d {
        let c: Vect = cols.column(i).into();
        dcols.set_column(i, &(-model.christoffel(tau, x, &v, &c)));
    }
    (v, dcols)
}

/// Advances the frame by one clock step `cfg.dt` driven by the Gaussian
/// increment `db` (variance `dt` per component).
pub fn step(model: &dyn MetricModel, frame: &OrthonormalFrame, db: &Vect, cfg: &SdeStepConfig) -> Result<OrthonormalFrame> {
    let d = model.dim();
    let lambda = cfg.speed_scale;
    let tau = frame.time;
    let tau_next = tau + lambda * cfg.dt;
    if !(tau_next < model.horizon()) {
        return Err(LabError::TimeOutOfRange { tau: tau_next, horizon: model.horizon(), model: model.id() });
    }
    let xi = db * (2.0 * lambda).sqrt();
    let x0 = frame.base.coords;
    let u0 = frame.columns;

    // vertical drift -1/2 lambda dt u G, G_ab = (d_tau g)(u e_a, u e_b)
    let gdot = model.metric_dot(tau, &x0);
    let gram = u0.transpose() * gdot * u0;
    let mut drift = u0 * gram * (-0.5 * lambda * cfg.dt);
    for i in d..crate::linalg::MAX_AMBIENT {
        drift.set_column(i, &Vect::zeros());
    }

    let (v0, du0) = horizontal(model, tau, &x0, &u0, &xi, d);
    let x1 = x0 + v0;
    let u1 = u0 + du0;
    let (v1, du1) = horizontal(model, tau_next, &x1, &u1, &xi, d);
    let x_new = model.project_point(&(x0 + (v0 + v1) * 0.5));
    let mut u_new = u0 + (du0 + du1) * 0.5 + drift;

    if !model.contains(&x_new) || x_new.iter().any(|c| !c.is_finite()) {
        return Err(LabError::DomainExit(tau_next));
    }
    for i in 0..d {
        let c: Vect = u_new.column(i).into();
        u_new.set_column(i, &model.project_tangent(&x_new, &c));
    }
    let mut steps_since_gs = frame.steps_since_gs + 1;
    if steps_since_gs >= cfg.reorthonormalize_every {
        let g = model.metric(tau_next, &x_new);
        u_new = gram_schmidt(&g, &u_new, d).ok_or(LabError::DegenerateMetric)?;
        steps_since_gs = 0;
    }
    Ok(OrthonormalFrame {
        base: ChartPoint { coords: x_new, model_id: frame.base.model_id },
        columns: u_new,
        time: tau_next,
        steps_since_gs,
    })
}

/// RNG stream for one trial. Streams are indexed so that results do not
/// depend on scheduling.
pub fn trial_rng(seed: u64, trial: u64, attempt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial | (attempt << 40));
    rng
}

pub fn gaussian_increment<R: Rng>(rng: &mut R, d: usize, dt: f64) -> Vect {
    let mut v = Vect::zeros();
    let s = dt.sqrt();
    for i in 0..d {
        v[i] = s * rng.sample::<f64, _>(StandardNormal);
    }
    v
}

/// Uniform clock grid from `s0` to `t_end` whose spacing does not exceed `dt`.
pub fn clock_grid(s0: f64, t_end: f64, dt: f64) -> Vec<f64> {
    let n = ((t_end - s0) / dt - 1e-9).ceil().max(1.0) as usize;
    let h = (t_end - s0) / n as f64;
    (0..=n).map(|k| if k == n { t_end } else { s0 + h * k as f64 }).collect()
}

#[derive(Clone, Debug)]
pub struct BrownianPath {
    /// Clock times.
    pub times: Vec<f64>,
    pub states: Vec<OrthonormalFrame>,
    /// Driving increments, one per step.
    pub increments: Vec<Vect>,
    pub seed: u64,
    /// Attempts thrown away after leaving the chart domain.
    pub discarded: usize,
}

/// Walks one path over `grid`, calling `visit(k, frame)` at every node.
pub fn walk<R, F>(model: &dyn MetricModel, start: OrthonormalFrame, grid: &[f64], cfg: &SdeStepConfig, rng: &mut R, mut visit: F) -> Result<()>
where
    R: Rng,
    F: FnMut(usize, &OrthonormalFrame, Option<&Vect>),
{
    let d = model.dim();
    let mut frame = start;
    visit(0, &frame, None);
    for k in 1..grid.len() {
        let h = grid[k] - grid[k - 1];
        let db = gaussian_increment(rng, d, h);
        frame = step(model, &frame, &db, &SdeStepConfig { dt: h, ..*cfg })?;
        visit(k, &frame, Some(&db));
    }
    Ok(())
}

const MAX_ATTEMPTS: u64 = 64;

/// Simulates one path from clock `s0` (metric time `lambda s0`) to `t_end`.
pub fn simulate_path(model: &dyn MetricModel, x: &ChartPoint, s0: f64, t_end: f64, cfg: &SdeStepConfig, seed: u64) -> Result<BrownianPath> {
    simulate_trial(model, x, s0, t_end, cfg, seed, 0)
}

pub fn simulate_trial(
    model: &dyn MetricModel,
    x: &ChartPoint,
    s0: f64,
    t_end: f64,
    cfg: &SdeStepConfig,
    seed: u64,
    trial: u64,
) -> Result<BrownianPath> {
    cfg.validate()?;
    let lambda = cfg.speed_scale;
    if !(s0 > 0.0 && s0 < t_end && lambda * t_end < model.horizon()) {
        return Err(LabError::Invalid(format!("need 0 < s0 < t_end < T/lambda, got s0={s0}, t_end={t_end}")));
    }
    let start = init_frame(model, x, lambda * s0)?;
    let grid = clock_grid(s0, t_end, cfg.dt);
    let mut discarded = 0;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = trial_rng(seed, trial, attempt);
        let mut states = Vec::with_capacity(grid.len());
        let mut increments = Vec::with_capacity(grid.len() - 1);
        let res = walk(model, start, &grid, cfg, &mut rng, |_, f, db| {
            states.push(*f);
            if let Some(db) = db {
                increments.push(*db);
            }
        });
        match res {
            Ok(()) => return Ok(BrownianPath { times: grid, states, increments, seed, discarded }),
            Err(LabError::DomainExit(_)) => discarded += 1,
            Err(e) => return Err(e),
        }
    }
    Err(LabError::TooManyDiscards { discarded, total: discarded })
}

/// Writes `t, x1..xn, defect` rows.
pub fn write_path_csv<W: Write>(model: &dyn MetricModel, path: &BrownianPath, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{}", csv_header(model, false))?;
    write_rows(model, path, None, out)
}

/// Writes `trial, t, x1..xn, defect` rows for several paths.
pub fn write_paths_csv<W: Write>(model: &dyn MetricModel, paths: &[(u64, BrownianPath)], header: bool, out: &mut W) -> std::io::Result<()> {
    if header {
        writeln!(out, "{}", csv_header(model, true))?;
    }
    for (trial, path) in paths {
        write_rows(model, path, Some(*trial), out)?;
    }
    Ok(())
}

fn csv_header(model: &dyn MetricModel, with_trial: bool) -> String {
    let mut header: Vec<String> = if with_trial { vec!["trial".into()] } else { Vec::new() };
    header.push("t".into());
    header.extend((1..=model.ambient_dim()).map(|i| format!("x{i}")));
    header.push("defect".into());
    header.join(",")
}

fn write_rows<W: Write>(model: &dyn MetricModel, path: &BrownianPath, trial: Option<u64>, out: &mut W) -> std::io::Result<()> {
    use crate::io::fmt_f64;
    let n = model.ambient_dim();
    for (t, f) in path.times.iter().zip(&path.states) {
        let mut row: Vec<String> = trial.iter().map(|k| k.to_string()).collect();
        row.push(fmt_f64(*t));
        row.extend((0..n).map(|i| fmt_f64(f.point()[i])));
        row.push(fmt_f64(orthonormality_defect_of(model, f)));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
