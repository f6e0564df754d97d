//! Oracles shared by the integration tests. Nothing here calls into the
//! shooting solver: closed forms and finite differences only.

#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;
use rsl::geometry::{ExpandingSphere, MetricModel, ShrinkingHyperbolic, StaticEuclidean};
use rsl::linalg::Vect;

pub fn exact_models() -> Vec<Box<dyn MetricModel>> {
    vec![
        Box::new(StaticEuclidean::new(2)),
        Box::new(ExpandingSphere::new(2)),
        Box::new(ShrinkingHyperbolic::new(2)),
    ]
}

pub fn random_point<R: Rng>(model: &dyn MetricModel, rng: &mut R, radius: f64) -> Vect {
    let mut v = Vect::zeros();
    for i in 0..model.ambient_dim() {
        v[i] = rng.sample(StandardNormal);
    }
    match model.id() {
        "euclidean" => v * (radius / (1.0 + v.norm())),
        "hyperbolic" => v * (radius.min(0.7) / (1.0 + v.norm())),
        _ => v.normalize(),
    }
}

/// Angle between unit vectors.
pub fn angle(x: &Vect, y: &Vect) -> f64 {
    x.dot(y).clamp(-1.0, 1.0).acos()
}

/// `∫_{s1}^{s2} ds / c(s^2)` for `g_tau = c(tau) g_0`.
pub fn inv_scale_integral(model: &dyn MetricModel, s1: f64, s2: f64) -> f64 {
    let a = 2.0 * (model.dim() as f64 - 1.0);
    let r = a.sqrt();
    match model.id() {
        "euclidean" => s2 - s1,
        "sphere" => ((r * s2).atan() - (r * s1).atan()) / r,
        "hyperbolic" => ((r * s2).atanh() - (r * s1).atanh()) / r,
        other => panic!("no closed form for {other}"),
    }
}

/// Base-metric distance, computed independently of the library.
pub fn base_distance(model: &dyn MetricModel, x: &Vect, y: &Vect) -> f64 {
    match model.id() {
        "euclidean" => (x - y).norm(),
        "sphere" => angle(x, y),
        "hyperbolic" => {
            let num = 2.0 * (x - y).norm_squared();
            let den = (1.0 - x.norm_squared()) * (1.0 - y.norm_squared());
            (1.0 + num / den).acosh()
        }
        other => panic!("no closed form for {other}"),
    }
}

/// For `g_tau = c(tau) g_0` with `R = R_0 / c` the minimizer follows a
/// `g_0`-geodesic, giving `Q = rho_0^2 / (2 I) + d (Delta s - I)`.
pub fn closed_form_q(model: &dyn MetricModel, x: &Vect, tau1: f64, y: &Vect, tau2: f64) -> f64 {
    let (s1, s2) = (tau1.sqrt(), tau2.sqrt());
    let i = inv_scale_integral(model, s1, s2);
    let rho = base_distance(model, x, y);
    let d = model.dim() as f64;
    let potential = if model.id() == "euclidean" { 0.0 } else { d * ((s2 - s1) - i) };
    rho * rho / (2.0 * i) + potential
}

/// Moves `h` along the tangent vector `e` (geodesically on the sphere).
pub fn displace(model: &dyn MetricModel, x: &Vect, e: &Vect, h: f64) -> Vect {
    if model.ambient_dim() > model.dim() {
        let v = e * h;
        let n = v.norm();
        if n == 0.0 {
            return *x;
        }
        (x * n.cos() + v * (n.sin() / n)).normalize()
    } else {
        x + e * h
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}
