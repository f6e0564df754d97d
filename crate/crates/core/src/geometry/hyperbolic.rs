use super::{space_form_bound, MetricModel};
use crate::linalg::{Mat, Vect};

/// Radius of the admissible Poincaré-disk region.
pub const DISK_RADIUS: f64 = 0.95;

/// `g_tau = c(tau) g_{H^d(-1)}` with `c(tau) = 1 - 2(d-1) tau` in Poincaré-disk
/// coordinates, `g_H = 4 |dx|^2 / (1 - |x|^2)^2`. Lifetime `T = 1 / (2(d-1))`.
#[derive(Debug, Clone)]
pub struct ShrinkingHyperbolic {
    d: usize,
    eye: Mat,
}

impl ShrinkingHyperbolic {
    pub fn new(d: usize) -> Self {
        assert!((2..=3).contains(&d), "ShrinkingHyperbolic supports d in 2..=3");
        let mut eye = Mat::zeros();
        for i in 0..d {
            eye[(i, i)] = 1.0;
        }
        Self { d, eye }
    }

    pub fn scale(&self, tau: f64) -> f64 {
        1.0 - 2.0 * (self.d as f64 - 1.0) * tau
    }

    fn conformal(x: &Vect) -> f64 {
        let q = 1.0 - x.norm_squared();
        4.0 / (q * q)
    }

    fn mobius_add(x: &Vect, y: &Vect) -> Vect {
        let xy = x.dot(y);
        let (x2, y2) = (x.norm_squared(), y.norm_squared());
        (x * (1.0 + 2.0 * xy + y2) + y * (1.0 - x2)) / (1.0 + 2.0 * xy + x2 * y2)
    }
}

impl MetricModel for ShrinkingHyperbolic {
    fn id(&self) -> &'static str {
        "hyperbolic"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn ambient_dim(&self) -> usize {
        self.d
    }
    fn horizon(&self) -> f64 {
        1.0 / (2.0 * (self.d as f64 - 1.0))
    }
    fn exact_flow(&self) -> bool {
        true
    }
    fn chart_domain(&self) -> &'static str {
        "Poincaré disk |x| < 0.95"
    }
    fn contains(&self, x: &Vect) -> bool {
        x.iter().all(|c| c.is_finite()) && x.norm() < DISK_RADIUS && x.iter().skip(self.d).all(|c| *c == 0.0)
    }
    fn tangent_basis(&self, _x: &Vect) -> Mat {
        self.eye
    }
    fn metric(&self, tau: f64, x: &Vect) -> Mat {
        self.eye * (self.scale(tau) * Self::conformal(x))
    }
    fn metric_dot(&self, _tau: f64, x: &Vect) -> Mat {
        self.eye * (-2.0 * (self.d as f64 - 1.0) * Self::conformal(x))
    }
    fn norm2(&self, tau: f64, x: &Vect, v: &Vect) -> f64 {
        self.scale(tau) * Self::conformal(x) * v.norm_squared()
    }
    fn christoffel(&self, _tau: f64, x: &Vect, v: &Vect, w: &Vect) -> Vect {
        // conformal factor e^{2 psi}, grad psi = 2x / (1 - |x|^2)
        let a = x * (2.0 / (1.0 - x.norm_squared()));
        w * v.dot(&a) + v * w.dot(&a) - a * v.dot(w)
    }
    fn ricci_sharp(&self, tau: f64, _x: &Vect) -> Mat {
        self.eye * (-(self.d as f64 - 1.0) / self.scale(tau))
    }
    fn ricci_apply(&self, tau: f64, _x: &Vect, v: &Vect) -> Vect {
        v * (-(self.d as f64 - 1.0) / self.scale(tau))
    }
    fn scalar(&self, tau: f64, _x: &Vect) -> f64 {
        let d = self.d as f64;
        -d * (d - 1.0) / self.scale(tau)
    }
    fn grad_scalar(&self, _tau: f64, _x: &Vect) -> Vect {
        Vect::zeros()
    }
    fn distance(&self, tau: f64, x: &Vect, y: &Vect) -> f64 {
        let num = 2.0 * (x - y).norm_squared();
        let den = (1.0 - x.norm_squared()) * (1.0 - y.norm_squared());
        // acosh(1 + u) = ln(1 + u + sqrt(u (u + 2))), stable for small u
        let u = num / den;
        self.scale(tau).sqrt() * (u + (u * (u + 2.0)).sqrt()).ln_1p()
    }
    fn log_map(&self, _tau: f64, x: &Vect, y: &Vect) -> Vect {
        let w = Self::mobius_add(&(-x), y);
        let nw = w.norm();
        if nw < 1e-300 {
            return Vect::zeros();
        }
        let lam = 2.0 / (1.0 - x.norm_squared());
        w * ((2.0 / lam) * nw.atanh() / nw)
    }
    fn exp_map(&self, _tau: f64, x: &Vect, v: &Vect) -> Vect {
        let nv = v.norm();
        if nv < 1e-300 {
            return *x;
        }
        let lam = 2.0 / (1.0 - x.norm_squared());
        Self::mobius_add(x, &(v * ((lam * nv / 2.0).tanh() / nv)))
    }
    fn curvature_bound_on(&self, _tau_lo: f64, tau_hi: f64) -> f64 {
        space_form_bound(self.d, 1.0 / self.scale(tau_hi))
    }
}
