//! L-length, L-geodesics and the L-distance `Q`.
//!
//! Everything is integrated in the time `s = sqrt(tau)`. With `y(s) = gamma(s^2)`
//! the L-length becomes
//!
//! ```text
//! L = ∫ (1/2 |y'|^2_{g(s^2)} + 2 s^2 R(y, s^2)) ds
//! ```
//!
//! which is regular at `tau = 0`. Its Euler-Lagrange equation is
//!
//! ```text
//! y'' = -Gamma(y', y') + 2 s^2 grad R - 2 s g^{-1} (d_tau g)(y')
//! ```
//!
//! where `g^{-1} d_tau g = 2 Ric^sharp` along a backwards Ricci flow. The
//! velocity convention is `y'(s_1) = 2 Z`, so that `Z = sqrt(tau) gamma_dot`
//! at the start point, matching the limit `sqrt(tau) gamma_dot -> Z` at
//! `tau_1 = 0`.

mod audit;
mod derivs;
mod direct;
mod shoot;

pub use audit::{lower_bound_audit, q_lower_bound, LowerBoundAudit};
pub use derivs::{dt1_q, dt2_q, grad1_q, grad2_q};
pub use direct::{direct_q, DirectPath};
pub use shoot::{q_distance, Candidate, QResult, ShootConfig};

use crate::error::{LabError, Result};
use crate::geometry::{check_point, check_time, ChartPoint, MetricModel};
use crate::linalg::Vect;

/// A space-time path sampled on a uniform grid in `s = sqrt(tau)`.
///
/// `velocities` hold `dy/ds`; the `tau`-velocity is `gamma_dot = (dy/ds) / (2 s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LPath {
    pub s: Vec<f64>,
    pub points: Vec<Vect>,
    pub velocities: Vec<Vect>,
}

impl LPath {
    pub fn tau(&self, k: usize) -> f64 {
        self.s[k] * self.s[k]
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// `gamma_dot` at node `k`; undefined at `tau = 0`.
    pub fn gamma_dot(&self, k: usize) -> Option<Vect> {
        (self.s[k] > 0.0).then(|| self.velocities[k] / (2.0 * self.s[k]))
    }

    pub fn start(&self) -> &Vect {
        &self.points[0]
    }

    pub fn end(&self) -> &Vect {
        self.points.last().expect("nonempty path")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LGeodesic {
    /// Initial datum `Z`, with `dy/ds(s_1) = 2 Z`.
    pub initial_z: Vect,
    pub path: LPath,
    pub length: f64,
    /// Endpoint discrepancy against integration with half the step.
    pub residual: f64,
}

impl LGeodesic {
    pub fn tau1(&self) -> f64 {
        self.path.tau(0)
    }

    pub fn tau2(&self) -> f64 {
        self.path.tau(self.path.len() - 1)
    }
}

/// `g^{-1} (d_tau g)(v)`, the Ricci term of the geodesic equation. Along an
/// exact flow this is `2 Ric^sharp(v)`.
pub fn flow_endomorphism(model: &dyn MetricModel, tau: f64, x: &Vect, v: &Vect) -> Vect {
    if model.exact_flow() {
        return model.ricci_apply(tau, x, v) * 2.0;
    }
    let d = model.dim();
    let b = model.tangent_basis(x);
    let g = model.metric(tau, x);
    let gdot = model.metric_dot(tau, x);
    let mut gb = nalgebra::DMatrix::zeros(d, d);
    let mut rhs = nalgebra::DVector::zeros(d);
    let gdv = gdot * v;
    for i in 0..d {
        let bi: Vect = b.column(i).into();
        rhs[i] = bi.dot(&gdv);
        for j in 0..d {
            let bj: Vect = b.column(j).into();
            gb[(i, j)] = bi.dot(&(g * bj));
        }
    }
    let coef = gb.cholesky().expect("metric is positive definite").solve(&rhs);
    let mut out = Vect::zeros();
    for i in 0..d {
        let bi: Vect = b.column(i).into();
        out += bi * coef[i];
    }
    out
}

/// Second derivative `y''` of an L-geodesic.
fn acceleration(model: &dyn MetricModel, s: f64, y: &Vect, p: &Vect) -> Vect {
    let tau = s * s;
    -model.christoffel(tau, y, p, p) + model.grad_scalar(tau, y) * (2.0 * tau) - flow_endomorphism(model, tau, y, p) * (2.0 * s)
}

/// The L-Lagrangian in `s`-time.
pub(crate) fn lagrangian(model: &dyn MetricModel, s: f64, y: &Vect, p: &Vect) -> f64 {
    let tau = s * s;
    0.5 * model.norm2(tau, y, p) + 2.0 * tau * model.scalar(tau, y)
}

/// Composite Simpson rule on a uniform grid (trapezoid when the interval
/// count is odd).
pub(crate) fn uniform_quadrature(h: f64, f: &[f64]) -> f64 {
    let n = f.len() - 1;
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        return h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[n]));
    }
    let mut acc = f[0] + f[n];
    for (k, v) in f.iter().enumerate().take(n).skip(1) {
        acc += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

/// L-length of a path sampled on a uniform `s`-grid.
pub fn l_length(model: &dyn MetricModel, path: &LPath) -> f64 {
    if path.len() < 2 {
        return 0.0;
    }
    let vals: Vec<f64> = (0..path.len()).map(|k| lagrangian(model, path.s[k], &path.points[k], &path.velocities[k])).collect();
    uniform_quadrature(path.s[1] - path.s[0], &vals)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeConfig {
    /// RK4 steps over `[s_1, s_2]` (rounded up to an even count).
    pub steps: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self { steps: 1000 }
    }
}

impl OdeConfig {
    fn even_steps(&self) -> usize {
        let n = self.steps.max(2);
        n + n % 2
    }
}

/// Integrates from `(x, s_1)` with `dy/ds = 2 Z`, recording every node.
/// Returns the path; `record = false` keeps only the endpoints.
pub(crate) fn integrate_path(
    model: &dyn MetricModel,
    x: &Vect,
    s1: f64,
    z: &Vect,
    s2: f64,
    steps: usize,
    record: bool,
) -> Result<LPath> {
    let h = (s2 - s1) / steps as f64;
    let mut y = *x;
    let mut p = model.project_tangent(x, &(z * 2.0));
    let cap = if record { steps + 1 } else { 2 };
    let mut path = LPath { s: Vec::with_capacity(cap), points: Vec::with_capacity(cap), velocities: Vec::with_capacity(cap) };
    path.s.push(s1);
    path.points.push(y);
    path.velocities.push(p);
    for k in 0..steps {
        let s = s1 + h * k as f64;
        let k1y = p;
        let k1p = acceleration(model, s, &y, &p);
        let y2 = y + k1y * (0.5 * h);
        let p2 = p + k1p * (0.5 * h);
        let k2p = acceleration(model, s + 0.5 * h, &y2, &p2);
        let y3 = y + p2 * (0.5 * h);
        let p3 = p + k2p * (0.5 * h);
        let k3p = acceleration(model, s + 0.5 * h, &y3, &p3);
        let y4 = y + p3 * h;
        let p4 = p + k3p * h;
        let k4p = acceleration(model, s + h, &y4, &p4);
        let yn = y + (k1y + p2 * 2.0 + p3 * 2.0 + p4) * (h / 6.0);
        let pn = p + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
        let s_next = if k + 1 == steps { s2 } else { s1 + h * (k + 1) as f64 };
        if yn.iter().chain(pn.iter()).any(|c| !c.is_finite()) || pn.norm() > 1e12 {
            return Err(LabError::BlowUp(s_next));
        }
        y = model.project_point(&yn);
        if !model.contains(&y) {
            return Err(LabError::DomainExit(s_next * s_next));
        }
        p = model.project_tangent(&y, &pn);
        if record || k + 1 == steps {
            path.s.push(s_next);
            path.points.push(y);
            path.velocities.push(p);
        }
    }
    Ok(path)
}

fn validate_times(model: &dyn MetricModel, tau1: f64, tau2: f64) -> Result<()> {
    check_time(model, tau1)?;
    check_time(model, tau2)?;
    if !(tau1 < tau2) {
        return Err(LabError::Invalid(format!("need tau1 < tau2, got {tau1} and {tau2}")));
    }
    Ok(())
}

fn build_geodesic(model: &dyn MetricModel, x: &Vect, s1: f64, z: &Vect, s2: f64, steps: usize, with_residual: bool) -> Result<LGeodesic> {
    let path = integrate_path(model, x, s1, z, s2, steps, true)?;
    let length = l_length(model, &path);
    let residual = if with_residual {
        let coarse = integrate_path(model, x, s1, z, s2, steps / 2, false)?;
        let dy = (coarse.end() - path.end()).norm();
        let dp = (coarse.velocities[1] - path.velocities[steps]).norm();
        dy.max(dp)
    } else {
        f64::NAN
    };
    Ok(LGeodesic { initial_z: model.project_tangent(x, z), path, length, residual })
}

/// Solves the L-geodesic equation from `(x, tau1)` with initial datum `Z`.
pub fn integrate_l_geodesic(model: &dyn MetricModel, x: &ChartPoint, tau1: f64, z: &Vect, tau2: f64, cfg: &OdeConfig) -> Result<LGeodesic> {
    validate_times(model, tau1, tau2)?;
    check_point(model, x)?;
    build_geodesic(model, &x.coords, tau1.sqrt(), z, tau2.sqrt(), cfg.even_steps(), true)
}

/// The L-exponential map: endpoint of the L-geodesic with datum `Z`.
pub fn l_exp(model: &dyn MetricModel, x: &ChartPoint, tau1: f64, z: &Vect, tau2: f64, cfg: &OdeConfig) -> Result<ChartPoint> {
    validate_times(model, tau1, tau2)?;
    check_point(model, x)?;
    let path = integrate_path(model, &x.coords, tau1.sqrt(), z, tau2.sqrt(), cfg.even_steps(), false)?;
    ChartPoint::from_vect(model, *path.end())
}
