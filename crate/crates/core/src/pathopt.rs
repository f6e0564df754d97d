//! Direct minimization of discretized path functionals.
//!
//! A path is a list of nodes on a uniform parameter grid with fixed
//! endpoints. The functional is a sum of per-segment Lagrangians evaluated at
//! the (projected) segment midpoint with the finite-difference velocity. The
//! minimizer is gradient descent with Armijo backtracking, using an `H^1`
//! (discrete Laplacian) preconditioner so that the iteration count does not
//! grow with the node count.

use crate::geometry::MetricModel;
use crate::linalg::Vect;

pub struct DiscretePath {
    pub params: Vec<f64>,
    pub nodes: Vec<Vect>,
}

#[derive(Clone, Copy, Debug)]
pub struct PathOptConfig {
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for PathOptConfig {
    fn default() -> Self {
        Self { max_iter: 4000, rel_tol: 1e-15 }
    }
}

fn segment<F>(model: &dyn MetricModel, lag: &F, s0: f64, s1: f64, a: &Vect, b: &Vect) -> f64
where
    F: Fn(f64, &Vect, &Vect) -> f64,
{
    let h = s1 - s0;
    let mid = model.project_point(&((a + b) * 0.5));
    let vel = model.project_tangent(&mid, &((b - a) / h));
    h * lag(0.5 * (s0 + s1), &mid, &vel)
}

pub fn path_value<F>(model: &dyn MetricModel, lag: &F, path: &DiscretePath) -> f64
where
    F: Fn(f64, &Vect, &Vect) -> f64,
{
    (0..path.nodes.len() - 1)
        .map(|k| segment(model, lag, path.params[k], path.params[k + 1], &path.nodes[k], &path.nodes[k + 1]))
        .sum()
}

/// Solves `tridiag(-1, 2, -1) y = r` (Thomas algorithm), one ambient
/// component at a time.
fn laplacian_solve(r: &[Vect]) -> Vec<Vect> {
    let n = r.len();
    let mut c = vec![0.0; n];
    let mut d = vec![Vect::zeros(); n];
    for i in 0..n {
        let denom = 2.0 + if i > 0 { c[i - 1] } else { 0.0 };
        c[i] = -1.0 / denom;
        let prev = if i > 0 { d[i - 1] } else { Vect::zeros() };
        d[i] = (r[i] + prev) / denom;
    }
    let mut y = vec![Vect::zeros(); n];
    for i in (0..n).rev() {
        y[i] = if i + 1 < n { d[i] - y[i + 1] * c[i] } else { d[i] };
    }
    y
}

/// Minimizes the discretized functional in place and returns its final value.
pub fn minimize<F>(model: &dyn MetricModel, lag: F, path: &mut DiscretePath, cfg: &PathOptConfig) -> f64
where
    F: Fn(f64, &Vect, &Vect) -> f64,
{
    let n = path.nodes.len();
    assert!(n >= 3, "need at least one interior node");
    let h = path.params[1] - path.params[0];
    let dim = model.dim();
    let mut value = path_value(model, &lag, path);
    let mut step: f64 = 1.0;
    let mut stalls = 0;
    for _ in 0..cfg.max_iter {
        // tangent gradient at interior nodes by central differences of the two
        // adjacent segments
        let mut grad = vec![Vect::zeros(); n - 2];
        for k in 1..n - 1 {
            let x = path.nodes[k];
            let basis = model.tangent_basis(&x);
            let eps = 1e-6 * (1.0 + x.norm());
            let local = |y: &Vect| {
                segment(model, &lag, path.params[k - 1], path.params[k], &path.nodes[k - 1], y)
                    + segment(model, &lag, path.params[k], path.params[k + 1], y, &path.nodes[k + 1])
            };
            for j in 0..dim {
                let e: Vect = basis.column(j).into();
                let fp = local(&model.project_point(&(x + e * eps)));
                let fm = local(&model.project_point(&(x - e * eps)));
                grad[k - 1] += e * ((fp - fm) / (2.0 * eps));
            }
        }
        // H^1 preconditioning: the Hessian of the kinetic term is tridiag / h
        let dir: Vec<Vect> = laplacian_solve(&grad).into_iter().map(|g| -g * h).collect();
        let slope: f64 = grad.iter().zip(&dir).map(|(g, p)| g.dot(p)).sum();
        if !(slope < 0.0) {
            break;
        }
        let mut accepted = false;
        let mut t = (step * 2.0).min(1.0);
        for _ in 0..40 {
            let mut trial = DiscretePath { params: path.params.clone(), nodes: path.nodes.clone() };
            for k in 1..n - 1 {
                let p = model.project_tangent(&path.nodes[k], &dir[k - 1]);
                trial.nodes[k] = model.project_point(&(path.nodes[k] + p * t));
            }
            let v = path_value(model, &lag, &trial);
            if v.is_finite() && v <= value + 1e-4 * t * slope && trial.nodes.iter().all(|x| model.contains(x)) {
                let improvement = value - v;
                *path = trial;
                value = v;
                step = t;
                accepted = true;
                if improvement <= cfg.rel_tol * (1.0 + value.abs()) {
                    stalls += 1;
                } else {
                    stalls = 0;
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted || stalls >= 3 {
            break;
        }
    }
    value
}

/// Riemannian distance by minimizing the discrete energy of a path started on
/// the model's reference geodesic.
pub fn numeric_distance(model: &dyn MetricModel, tau: f64, x: &Vect, y: &Vect, nodes: usize) -> f64 {
    if (x - y).norm() < 1e-15 {
        return 0.0;
    }
    let v = model.log_map(tau, x, y);
    let params: Vec<f64> = (0..nodes).map(|k| k as f64 / (nodes - 1) as f64).collect();
    let mut pts: Vec<Vect> = params.iter().map(|s| model.exp_map(tau, x, &(v * *s))).collect();
    pts[0] = *x;
    pts[nodes - 1] = *y;
    let mut path = DiscretePath { params, nodes: pts };
    let energy = |_s: f64, mid: &Vect, vel: &Vect| 0.5 * model.norm2(tau, mid, vel);
    let e = minimize(model, energy, &mut path, &PathOptConfig::default());
    // constant-speed minimizer on [0, 1]: E = length^2 / 2
    (2.0 * e).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ExpandingSphere, ShrinkingHyperbolic};
    use crate::linalg::vect;

    #[test]
    fn laplacian_solve_inverts_tridiagonal() {
        let r = vec![vect(&[1.0]), vect(&[0.0]), vect(&[2.0])];
        let y = laplacian_solve(&r);
        for i in 0..3 {
            let mut lhs = y[i] * 2.0;
            if i > 0 {
                lhs -= y[i - 1];
            }
            if i < 2 {
                lhs -= y[i + 1];
            }
            assert!((lhs - r[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn numeric_distance_recovers_closed_forms() {
        let s = ExpandingSphere::new(2);
        let (x, y) = (vect(&[1.0, 0.0, 0.0]), vect(&[0.0, 0.6, 0.8]));
        let d = numeric_distance(&s, 0.5, &x, &y, 64);
        assert!((d - s.distance(0.5, &x, &y)).abs() < 1e-3, "{d}");
        let h = ShrinkingHyperbolic::new(2);
        let (x, y) = (vect(&[0.3, -0.2]), vect(&[-0.5, 0.4]));
        let d = numeric_distance(&h, 0.1, &x, &y, 64);
        assert!((d - h.distance(0.1, &x, &y)).abs() < 1e-3 * d, "{d}");
    }
}
