use super::{sphere_exp, sphere_log, sphere_projector, sphere_tangent_basis, MetricModel};
use crate::linalg::{vect, Mat, Vect};
use crate::pathopt::numeric_distance;

/// Conformally deformed round 2-sphere `g_tau = (1 + 2 tau) e^{2 phi} g_{S^2}`
/// with a Gaussian bump `phi = a exp((z - 1) / sigma^2)`, `z = <x, p>`.
///
/// This is not a Ricci flow (`exact_flow = false`); it exists so that code
/// paths with a non-vanishing scalar-curvature gradient get exercised. The
/// reference log/exp maps are those of the background round sphere.
#[derive(Debug, Clone)]
pub struct BumpConformal {
    amplitude: f64,
    width: f64,
    pole: Vect,
}

impl Default for BumpConformal {
    fn default() -> Self {
        Self::new(0.3, 0.5)
    }
}

/// Derivatives of the bump profile in `z`.
struct Profile {
    phi: f64,
    d1: f64,
    d2: f64,
    d3: f64,
}

impl BumpConformal {
    pub fn new(amplitude: f64, width: f64) -> Self {
        assert!(width > 0.0 && amplitude.is_finite());
        Self { amplitude, width, pole: vect(&[0.0, 0.0, 1.0]) }
    }

    fn profile(&self, z: f64) -> Profile {
        let s2 = self.width * self.width;
        let phi = self.amplitude * ((z - 1.0) / s2).exp();
        Profile { phi, d1: phi / s2, d2: phi / (s2 * s2), d3: phi / (s2 * s2 * s2) }
    }

    /// Gaussian curvature of `e^{2 phi} g_{S^2}` and its `z`-derivative.
    fn base_curvature(&self, z: f64) -> (f64, f64) {
        let p = self.profile(z);
        let lap = (1.0 - z * z) * p.d2 - 2.0 * z * p.d1;
        let lap_dz = (1.0 - z * z) * p.d3 - 4.0 * z * p.d2 - 2.0 * p.d1;
        let e = (-2.0 * p.phi).exp();
        let k = e * (1.0 - lap);
        let dk = e * (-2.0 * p.d1 * (1.0 - lap) - lap_dz);
        (k, dk)
    }

    fn factor(&self, tau: f64, x: &Vect) -> f64 {
        (1.0 + 2.0 * tau) * (2.0 * self.profile(x.dot(&self.pole)).phi).exp()
    }

    /// Tangential gradient on the unit sphere of a function of `z`.
    fn z_gradient(&self, x: &Vect) -> Vect {
        self.pole - x * x.dot(&self.pole)
    }
}

impl MetricModel for BumpConformal {
    fn id(&self) -> &'static str {
        "bump"
    }
    fn dim(&self) -> usize {
        2
    }
    fn ambient_dim(&self) -> usize {
        3
    }
    fn horizon(&self) -> f64 {
        f64::INFINITY
    }
    fn exact_flow(&self) -> bool {
        false
    }
    fn chart_domain(&self) -> &'static str {
        "unit sphere in R^3"
    }
    fn contains(&self, x: &Vect) -> bool {
        (x.norm() - 1.0).abs() <= 1e-9 && x[3] == 0.0
    }
    fn project_point(&self, x: &Vect) -> Vect {
        x.normalize()
    }
    fn project_tangent(&self, x: &Vect, v: &Vect) -> Vect {
        v - x * x.dot(v)
    }
    fn tangent_basis(&self, x: &Vect) -> Mat {
        sphere_tangent_basis(x, 3)
    }
    fn metric(&self, tau: f64, x: &Vect) -> Mat {
        sphere_projector(x, 3) * self.factor(tau, x)
    }
    fn metric_dot(&self, _tau: f64, x: &Vect) -> Mat {
        sphere_projector(x, 3) * (2.0 * (2.0 * self.profile(x.dot(&self.pole)).phi).exp())
    }
    fn norm2(&self, tau: f64, x: &Vect, v: &Vect) -> f64 {
        self.factor(tau, x) * v.norm_squared()
    }
    fn christoffel(&self, _tau: f64, x: &Vect, v: &Vect, w: &Vect) -> Vect {
        let a = self.z_gradient(x) * self.profile(x.dot(&self.pole)).d1;
        x * v.dot(w) + w * v.dot(&a) + v * w.dot(&a) - a * v.dot(w)
    }
    fn ricci_sharp(&self, tau: f64, x: &Vect) -> Mat {
        let (k, _) = self.base_curvature(x.dot(&self.pole));
        sphere_projector(x, 3) * (k / (1.0 + 2.0 * tau))
    }
    fn ricci_apply(&self, tau: f64, x: &Vect, v: &Vect) -> Vect {
        let (k, _) = self.base_curvature(x.dot(&self.pole));
        v * (k / (1.0 + 2.0 * tau))
    }
    fn scalar(&self, tau: f64, x: &Vect) -> f64 {
        2.0 * self.base_curvature(x.dot(&self.pole)).0 / (1.0 + 2.0 * tau)
    }
    fn grad_scalar(&self, tau: f64, x: &Vect) -> Vect {
        let (_, dk) = self.base_curvature(x.dot(&self.pole));
        self.z_gradient(x) * (2.0 * dk / (1.0 + 2.0 * tau) / self.factor(tau, x))
    }
    fn distance(&self, tau: f64, x: &Vect, y: &Vect) -> f64 {
        numeric_distance(self, tau, x, y, 48)
    }
    fn log_map(&self, _tau: f64, x: &Vect, y: &Vect) -> Vect {
        sphere_log(x, y)
    }
    fn exp_map(&self, _tau: f64, x: &Vect, v: &Vect) -> Vect {
        sphere_exp(x, v)
    }
    fn curvature_bound_on(&self, tau_lo: f64, _tau_hi: f64) -> f64 {
        // sup-sampled in z; |Rm| = 2|K| dominates |Ric| = sqrt(2)|K| in d = 2
        let n = 20_000;
        let kmax = (0..=n)
            .map(|i| self.base_curvature(-1.0 + 2.0 * i as f64 / n as f64).0.abs())
            .fold(0.0_f64, f64::max);
        1.01 * 2.0 * kmax / (1.0 + 2.0 * tau_lo)
    }
}
