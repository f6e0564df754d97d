use super::{space_form_bound, sphere_angle, sphere_exp, sphere_log, sphere_projector, sphere_tangent_basis, MetricModel};
use crate::linalg::{Mat, Vect};

/// Round sphere `g_tau = c(tau) g_{S^d(1)}` with `c(tau) = 1 + 2(d-1) tau`,
/// stored as unit vectors in `R^{d+1}`.
#[derive(Debug, Clone)]
pub struct ExpandingSphere {
    d: usize,
}

impl ExpandingSphere {
    pub fn new(d: usize) -> Self {
        assert!((2..=3).contains(&d), "ExpandingSphere supports d in 2..=3");
        Self { d }
    }

    pub fn scale(&self, tau: f64) -> f64 {
        1.0 + 2.0 * (self.d as f64 - 1.0) * tau
    }
}

impl MetricModel for ExpandingSphere {
    fn id(&self) -> &'static str {
        "sphere"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn ambient_dim(&self) -> usize {
        self.d + 1
    }
    fn horizon(&self) -> f64 {
        f64::INFINITY
    }
    fn exact_flow(&self) -> bool {
        true
    }
    fn chart_domain(&self) -> &'static str {
        "unit sphere in R^{d+1}"
    }
    fn contains(&self, x: &Vect) -> bool {
        (x.norm() - 1.0).abs() <= 1e-9 && x.iter().skip(self.d + 1).all(|c| *c == 0.0)
    }
    fn project_point(&self, x: &Vect) -> Vect {
        x.normalize()
    }
    fn project_tangent(&self, x: &Vect, v: &Vect) -> Vect {
        v - x * x.dot(v)
    }
    fn tangent_basis(&self, x: &Vect) -> Mat {
        sphere_tangent_basis(x, self.d + 1)
    }
    fn metric(&self, tau: f64, x: &Vect) -> Mat {
        sphere_projector(x, self.d + 1) * self.scale(tau)
    }
    fn metric_dot(&self, _tau: f64, x: &Vect) -> Mat {
        sphere_projector(x, self.d + 1) * (2.0 * (self.d as f64 - 1.0))
    }
    fn norm2(&self, tau: f64, _x: &Vect, v: &Vect) -> f64 {
        self.scale(tau) * v.norm_squared()
    }
    fn christoffel(&self, _tau: f64, x: &Vect, v: &Vect, w: &Vect) -> Vect {
        x * v.dot(w)
    }
    fn ricci_sharp(&self, tau: f64, x: &Vect) -> Mat {
        sphere_projector(x, self.d + 1) * ((self.d as f64 - 1.0) / self.scale(tau))
    }
    fn ricci_apply(&self, tau: f64, _x: &Vect, v: &Vect) -> Vect {
        v * ((self.d as f64 - 1.0) / self.scale(tau))
    }
    fn scalar(&self, tau: f64, _x: &Vect) -> f64 {
        let d = self.d as f64;
        d * (d - 1.0) / self.scale(tau)
    }
    fn grad_scalar(&self, _tau: f64, _x: &Vect) -> Vect {
        Vect::zeros()
    }
    fn distance(&self, tau: f64, x: &Vect, y: &Vect) -> f64 {
        self.scale(tau).sqrt() * sphere_angle(x, y)
    }
    fn log_map(&self, _tau: f64, x: &Vect, y: &Vect) -> Vect {
        sphere_log(x, y)
    }
    fn exp_map(&self, _tau: f64, x: &Vect, v: &Vect) -> Vect {
        sphere_exp(x, v)
    }
    fn curvature_bound_on(&self, tau_lo: f64, _tau_hi: f64) -> f64 {
        space_form_bound(self.d, 1.0 / self.scale(tau_lo))
    }
}
