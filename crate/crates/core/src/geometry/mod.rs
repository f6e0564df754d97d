//! Time-dependent Riemannian geometry of the built-in backwards-Ricci-flow
//! models.
//!
//! Every model implements [`MetricModel`] and is selected at runtime by its
//! string id through a [`ModelRegistry`]. Chart models (Euclidean, Poincaré
//! disk) use `d` coordinates; round-sphere models use unit vectors in
//! `R^{d+1}` with tangent vectors represented as ambient vectors orthogonal to
//! the base point. In both cases the metric matrix returned by
//! [`MetricModel::metric`] acts on those components directly.

mod bump;
mod euclidean;
mod hyperbolic;
mod registry;
mod sphere;

pub use bump::BumpConformal;
pub use euclidean::StaticEuclidean;
pub use hyperbolic::ShrinkingHyperbolic;
pub use registry::{ModelCtor, ModelParams, ModelRegistry};
pub use sphere::ExpandingSphere;

use std::fmt;
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::linalg::{max_abs, quad, to_vec, vect, Mat, Vect};

pub type SharedModel = Arc<dyn MetricModel>;

/// A complete time-dependent metric family `g_tau` with closed-form curvature.
///
/// Christoffel symbols are exposed as the symmetric contraction
/// `Gamma(v, w)`, so that the covariant derivative of a field `W` along a
/// curve with velocity `v` is `dW/dt + Gamma(v, W)`. For embedded models this
/// contraction also carries the normal (second fundamental form) part, which
/// keeps curves on the sphere.
pub trait MetricModel: Send + Sync + fmt::Debug {
    fn id(&self) -> &'static str;
    /// Intrinsic dimension `d`.
    fn dim(&self) -> usize;
    /// Number of stored coordinates (`d`, or `d + 1` for embedded spheres).
    fn ambient_dim(&self) -> usize;
    /// Flow lifetime `T` (possibly infinite).
    fn horizon(&self) -> f64;
    /// Whether `dg/dtau = 2 Ric` holds exactly.
    fn exact_flow(&self) -> bool;
    fn chart_domain(&self) -> &'static str;
    fn contains(&self, x: &Vect) -> bool;

    fn project_point(&self, x: &Vect) -> Vect {
        *x
    }
    fn project_tangent(&self, _x: &Vect, v: &Vect) -> Vect {
        *v
    }
    /// `d` columns spanning the tangent space at `x` (coordinate basis for
    /// charts, a Euclidean-orthonormal basis for embedded models).
    fn tangent_basis(&self, x: &Vect) -> Mat;

    fn metric(&self, tau: f64, x: &Vect) -> Mat;
    fn metric_dot(&self, tau: f64, x: &Vect) -> Mat;
    fn norm2(&self, tau: f64, x: &Vect, v: &Vect) -> f64 {
        quad(&self.metric(tau, x), v, v)
    }
    fn christoffel(&self, tau: f64, x: &Vect, v: &Vect, w: &Vect) -> Vect;
    /// `Ric^sharp`, the Ricci tensor raised to an endomorphism.
    fn ricci_sharp(&self, tau: f64, x: &Vect) -> Mat;
    fn ricci_apply(&self, tau: f64, x: &Vect, v: &Vect) -> Vect {
        self.ricci_sharp(tau, x) * v
    }
    fn scalar(&self, tau: f64, x: &Vect) -> f64;
    /// Gradient of the scalar curvature with respect to `g_tau`.
    fn grad_scalar(&self, tau: f64, x: &Vect) -> Vect;

    fn distance(&self, tau: f64, x: &Vect, y: &Vect) -> f64;
    /// Initial velocity of the unit-time Riemannian geodesic from `x` to `y`.
    /// Its `g_tau`-length is the distance for the exact models.
    fn log_map(&self, tau: f64, x: &Vect, y: &Vect) -> Vect;
    fn exp_map(&self, tau: f64, x: &Vect, v: &Vect) -> Vect;

    /// Bound on `|Rm| ∨ |Ric|` over `tau ∈ [tau_lo, tau_hi]`.
    fn curvature_bound_on(&self, tau_lo: f64, tau_hi: f64) -> f64;
}

/// Coordinate point tagged with the id of its owning model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartPoint {
    pub coords: Vect,
    pub model_id: &'static str,
}

impl ChartPoint {
    /// Validates `coords` against the model domain. Embedded models accept
    /// any nonzero vector and normalize it.
    pub fn new(model: &dyn MetricModel, coords: &[f64]) -> Result<Self> {
        if coords.len() != model.ambient_dim() || coords.iter().any(|c| !c.is_finite()) {
            return Err(LabError::Invalid(format!(
                "model `{}` expects {} finite coordinates, got {:?}",
                model.id(),
                model.ambient_dim(),
                coords
            )));
        }
        let x = model.project_point(&vect(coords));
        Self::from_vect(model, x)
    }

    pub fn from_vect(model: &dyn MetricModel, x: Vect) -> Result<Self> {
        if !model.contains(&x) {
            return Err(LabError::OutOfDomain(to_vec(&x, model.ambient_dim()), model.id()));
        }
        Ok(Self { coords: x, model_id: model.id() })
    }

    pub fn to_vec(&self, model: &dyn MetricModel) -> Vec<f64> {
        to_vec(&self.coords, model.ambient_dim())
    }
}

/// Vector attached to a chart point, in chart (or ambient) components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVector {
    pub base: ChartPoint,
    pub components: Vect,
}

impl TangentVector {
    pub fn new(model: &dyn MetricModel, base: ChartPoint, components: Vect) -> Result<Self> {
        if base.model_id != model.id() || components.iter().any(|c| !c.is_finite()) {
            return Err(LabError::Invalid("tangent vector does not belong to this model".into()));
        }
        let components = model.project_tangent(&base.coords, &components);
        Ok(Self { base, components })
    }
}

pub(crate) fn check_time(model: &dyn MetricModel, tau: f64) -> Result<()> {
    if !(tau >= 0.0 && tau < model.horizon()) {
        return Err(LabError::TimeOutOfRange { tau, horizon: model.horizon(), model: model.id() });
    }
    Ok(())
}

pub(crate) fn check_point(model: &dyn MetricModel, x: &ChartPoint) -> Result<()> {
    if x.model_id != model.id() || !model.contains(&x.coords) {
        return Err(LabError::OutOfDomain(to_vec(&x.coords, model.ambient_dim()), model.id()));
    }
    Ok(())
}

/// Ricci tensor as a (0,2) tensor, `g · Ric^sharp`.
pub fn ricci_lowered(model: &dyn MetricModel, tau: f64, x: &Vect) -> Mat {
    model.metric(tau, x) * model.ricci_sharp(tau, x)
}

/// `max |dg/dtau - 2 Ric|` over matrix entries.
pub fn flow_residual(model: &dyn MetricModel, tau: f64, x: &ChartPoint) -> Result<f64> {
    check_time(model, tau)?;
    check_point(model, x)?;
    let diff = model.metric_dot(tau, &x.coords) - ricci_lowered(model, tau, &x.coords) * 2.0;
    Ok(max_abs(&diff))
}

pub fn riemannian_distance(model: &dyn MetricModel, tau: f64, x: &ChartPoint, y: &ChartPoint) -> Result<f64> {
    check_time(model, tau)?;
    check_point(model, x)?;
    check_point(model, y)?;
    Ok(model.distance(tau, &x.coords, &y.coords))
}

/// A constant `C0` bounding `|Rm| ∨ |Ric|` on `[0, tau_max]`.
pub fn curvature_bound(model: &dyn MetricModel, tau_max: f64) -> Result<f64> {
    check_time(model, tau_max)?;
    Ok(model.curvature_bound_on(0.0, tau_max))
}

/// Tensor norms `(|Rm|, |Ric|)` computed from `Ric^sharp` alone, valid for
/// `d <= 3` where the Weyl tensor vanishes.
pub fn curvature_norms(model: &dyn MetricModel, tau: f64, x: &Vect) -> (f64, f64) {
    let ric = model.ricci_sharp(tau, x);
    let ric_sq = (ric * ric).trace();
    let r = ric.trace();
    let rm = match model.dim() {
        1 => 0.0,
        2 => r.abs(),
        _ => (4.0 * ric_sq - r * r).max(0.0).sqrt(),
    };
    (rm, ric_sq.max(0.0).sqrt())
}

/// Constant-curvature tensor norms: `|Rm| = |K| sqrt(2d(d-1))`,
/// `|Ric| = (d-1)|K| sqrt(d)`.
pub(crate) fn space_form_bound(d: usize, k_abs: f64) -> f64 {
    let d = d as f64;
    let rm = k_abs * (2.0 * d * (d - 1.0)).sqrt();
    let ric = (d - 1.0) * k_abs * d.sqrt();
    rm.max(ric)
}

/// Orthonormal complement of the unit vector `x` among the first `n`
/// coordinates (columns `0..n-1` of the result).
pub(crate) fn sphere_tangent_basis(x: &Vect, n: usize) -> Mat {
    let mut cands: Vec<(f64, Vect)> = (0..n)
        .map(|k| {
            let mut e = Vect::zeros();
            e[k] = 1.0;
            let t = e - x * x[k];
            (t.norm(), t)
        })
        .collect();
    // drop the standard direction most aligned with x
    let worst = cands
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .map(|(i, _)| i)
        .unwrap();
    cands.remove(worst);
    let mut out = Mat::zeros();
    for (col, (_, mut v)) in cands.into_iter().enumerate() {
        for j in 0..col {
            let e: Vect = out.column(j).into();
            v -= e * e.dot(&v);
        }
        let nv = v.norm();
        out.set_column(col, &(v / nv));
    }
    out
}

pub fn sphere_projector(x: &Vect, n: usize) -> Mat {
    let mut p = Mat::zeros();
    for i in 0..n {
        p[(i, i)] = 1.0;
    }
    p - x * x.transpose()
}

/// Great-circle angle between unit vectors, stable for nearby points.
pub(crate) fn sphere_angle(x: &Vect, y: &Vect) -> f64 {
    let s = (x - y).norm();
    let c = (x + y).norm();
    2.0 * s.atan2(c)
}

pub(crate) fn sphere_log(x: &Vect, y: &Vect) -> Vect {
    let theta = sphere_angle(x, y);
    let t = y - x * x.dot(y);
    let nt = t.norm();
    if nt < 1e-300 {
        return Vect::zeros();
    }
    t * (theta / nt)
}

pub(crate) fn sphere_exp(x: &Vect, v: &Vect) -> Vect {
    let nv = v.norm();
    if nv < 1e-300 {
        return *x;
    }
    (x * nv.cos() + v * (nv.sin() / nv)).normalize()
}

/// Default base point: the chart origin, or the last ambient axis for
/// embedded models.
pub fn reference_point(model: &dyn MetricModel) -> Vect {
    let mut o = Vect::zeros();
    if model.ambient_dim() > model.dim() {
        o[model.ambient_dim() - 1] = 1.0;
    }
    o
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_models() -> Vec<SharedModel> {
        vec![
            Arc::new(StaticEuclidean::new(1)),
            Arc::new(StaticEuclidean::new(3)),
            Arc::new(ExpandingSphere::new(2)),
            Arc::new(ExpandingSphere::new(3)),
            Arc::new(ShrinkingHyperbolic::new(2)),
            Arc::new(ShrinkingHyperbolic::new(3)),
            Arc::new(BumpConformal::default()),
        ]
    }

    fn random_tau<R: Rng>(model: &dyn MetricModel, rng: &mut R) -> f64 {
        let cap = model.horizon().min(2.0) * 0.9;
        rng.random::<f64>() * cap
    }

    #[test]
    fn flow_residual_vanishes_on_exact_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in all_models().iter().filter(|m| m.exact_flow()) {
            for _ in 0..100 {
                let tau = random_tau(m.as_ref(), &mut rng);
                let x = ChartPoint::from_vect(m.as_ref(), random_point(m.as_ref(), &mut rng)).unwrap();
                let r = flow_residual(m.as_ref(), tau, &x).unwrap();
                assert!(r <= 1e-10, "{} residual {r}", m.id());
            }
        }
    }

    #[test]
    fn flow_residual_examples() {
        let e = StaticEuclidean::new(2);
        let x = ChartPoint::new(&e, &[0.4, -1.0]).unwrap();
        assert_eq!(flow_residual(&e, 0.3, &x).unwrap(), 0.0);
        let b = BumpConformal::default();
        let center = ChartPoint::new(&b, &[0.0, 0.0, 1.0]).unwrap();
        assert!(flow_residual(&b, 0.1, &center).unwrap() > 1e-3);
        let h = ShrinkingHyperbolic::new(2);
        let o = ChartPoint::new(&h, &[0.0, 0.0]).unwrap();
        assert!(matches!(flow_residual(&h, 0.5, &o), Err(LabError::TimeOutOfRange { .. })));
        assert!(ChartPoint::new(&h, &[0.96, 0.0]).is_err());
    }

    #[test]
    fn scalar_is_trace_of_ricci_endomorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m in all_models() {
            for _ in 0..50 {
                let tau = random_tau(m.as_ref(), &mut rng);
                let x = random_point(m.as_ref(), &mut rng);
                let tr = m.ricci_sharp(tau, &x).trace();
                assert!((tr - m.scalar(tau, &x)).abs() <= 1e-10 * (1.0 + tr.abs()), "{}", m.id());
            }
        }
    }

    #[test]
    fn metric_is_symmetric_positive_on_tangent_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in all_models() {
            let tau = random_tau(m.as_ref(), &mut rng);
            let x = random_point(m.as_ref(), &mut rng);
            let g = m.metric(tau, &x);
            assert!(max_abs(&(g - g.transpose())) < 1e-14);
            let b = m.tangent_basis(&x);
            for i in 0..m.dim() {
                let v: Vect = b.column(i).into();
                assert!(quad(&g, &v, &v) > 0.0);
            }
        }
    }

    /// Metric compatibility checked by finite differences: for tangent fields
    /// `V = P a`, `W = P b` along a curve, `d/de <V,W> = <DV,W> + <V,DW>` with
    /// `DV = dV/de + Gamma(x', V)`. The metric time is frozen.
    #[test]
    fn christoffel_symbols_are_metric_compatible() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for m in all_models() {
            for _ in 0..20 {
                let tau = random_tau(m.as_ref(), &mut rng);
                let x0 = random_point(m.as_ref(), &mut rng);
                let u = random_tangent(m.as_ref(), &x0, &mut rng) * 0.1;
                let a = random_tangent(m.as_ref(), &x0, &mut rng);
                let b = random_tangent(m.as_ref(), &x0, &mut rng);
                let curve = |e: f64| m.project_point(&(x0 + u * e));
                let field = |e: f64, c: &Vect| m.project_tangent(&curve(e), c);
                let h = 1e-5;
                let f = |e: f64| quad(&m.metric(tau, &curve(e)), &field(e, &a), &field(e, &b));
                let lhs = (f(h) - f(-h)) / (2.0 * h);
                let xdot = (curve(h) - curve(-h)) / (2.0 * h);
                let cov = |c: &Vect| (field(h, c) - field(-h, c)) / (2.0 * h) + m.christoffel(tau, &x0, &xdot, &field(0.0, c));
                let g = m.metric(tau, &x0);
                let rhs = quad(&g, &cov(&a), &field(0.0, &b)) + quad(&g, &field(0.0, &a), &cov(&b));
                assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + lhs.abs()), "{}: {lhs} vs {rhs}", m.id());
            }
        }
    }

    #[test]
    fn distance_examples() {
        let e = StaticEuclidean::new(2);
        let (x, y) = (ChartPoint::new(&e, &[0.0, 0.0]).unwrap(), ChartPoint::new(&e, &[3.0, 4.0]).unwrap());
        assert_eq!(riemannian_distance(&e, 0.0, &x, &y).unwrap(), 5.0);
        let s = ExpandingSphere::new(2);
        let (n, sp) = (ChartPoint::new(&s, &[0.0, 0.0, 1.0]).unwrap(), ChartPoint::new(&s, &[0.0, 0.0, -1.0]).unwrap());
        assert!((riemannian_distance(&s, 0.0, &n, &sp).unwrap() - std::f64::consts::PI).abs() < 1e-15);
        let d1 = riemannian_distance(&s, 1.0, &n, &sp).unwrap();
        assert!((d1 - std::f64::consts::PI * 3f64.sqrt()).abs() < 1e-14);
    }

    /// Numeric geodesic oracle for the antipodal distance at tau = 1: integrate
    /// the g_1-length of the great circle through the poles.
    #[test]
    fn sphere_distance_matches_quadrature_of_great_circle() {
        let s = ExpandingSphere::new(2);
        let n = 20_000;
        let mut len = 0.0;
        for k in 0..n {
            let t0 = std::f64::consts::PI * k as f64 / n as f64;
            let t1 = std::f64::consts::PI * (k + 1) as f64 / n as f64;
            let p0 = vect(&[t0.sin(), 0.0, t0.cos()]);
            let p1 = vect(&[t1.sin(), 0.0, t1.cos()]);
            let mid = s.project_point(&((p0 + p1) * 0.5));
            let v = s.project_tangent(&mid, &(p1 - p0));
            len += s.norm2(1.0, &mid, &v).sqrt();
        }
        let d = s.distance(1.0, &vect(&[0.0, 0.0, 1.0]), &vect(&[0.0, 0.0, -1.0]));
        assert!((len - d).abs() < 1e-6, "{len} vs {d}");
    }

    #[test]
    fn distance_symmetry_and_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in test_models_with_numeric_distance() {
            for _ in 0..30 {
                let tau = random_tau(m.as_ref(), &mut rng);
                let (x, y, z) = (
                    random_point(m.as_ref(), &mut rng),
                    random_point(m.as_ref(), &mut rng),
                    random_point(m.as_ref(), &mut rng),
                );
                let dxy = m.distance(tau, &x, &y);
                let dyx = m.distance(tau, &y, &x);
                assert!((dxy - dyx).abs() <= 1e-8 * (1.0 + dxy), "{}", m.id());
                assert!(dxy <= m.distance(tau, &x, &z) + m.distance(tau, &z, &y) + 1e-8, "{}", m.id());
                assert!(m.distance(tau, &x, &x).abs() <= 1e-12);
            }
        }
    }

    fn test_models_with_numeric_distance() -> Vec<SharedModel> {
        // the bump distance is a path optimization, so a handful of triples is enough
        let mut ms = exact_models();
        ms.push(Arc::new(ExpandingSphere::new(3)));
        ms
    }

    #[test]
    fn bump_numeric_distance_is_a_metric() {
        let b = BumpConformal::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..3 {
            let (x, y, z) = (random_point(&b, &mut rng), random_point(&b, &mut rng), random_point(&b, &mut rng));
            let dxy = b.distance(0.2, &x, &y);
            assert!((dxy - b.distance(0.2, &y, &x)).abs() <= 1e-6 * (1.0 + dxy));
            assert!(dxy <= b.distance(0.2, &x, &z) + b.distance(0.2, &z, &y) + 1e-6);
        }
    }

    #[test]
    fn log_and_exp_are_inverse_and_log_has_distance_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in exact_models() {
            for _ in 0..20 {
                let tau = random_tau(m.as_ref(), &mut rng);
                let (x, y) = (random_point(m.as_ref(), &mut rng), random_point(m.as_ref(), &mut rng));
                let v = m.log_map(tau, &x, &y);
                assert!((m.exp_map(tau, &x, &v) - y).norm() < 1e-9, "{}", m.id());
                assert!((m.norm2(tau, &x, &v).sqrt() - m.distance(tau, &x, &y)).abs() < 1e-9, "{}", m.id());
            }
        }
    }

    #[test]
    fn curvature_bound_examples() {
        assert_eq!(curvature_bound(&StaticEuclidean::new(3), 5.0).unwrap(), 0.0);
        // Rm and Ric norms scale as 1/c; |Rm| = 2/c dominates |Ric| = sqrt(2)/c in d = 2
        let s = ExpandingSphere::new(2);
        assert!((curvature_bound(&s, 1.0).unwrap() - 2.0).abs() < 1e-15);
        let h = ShrinkingHyperbolic::new(2);
        assert!((curvature_bound(&h, 0.4).unwrap() - 2.0 / 0.2).abs() < 1e-12);
        assert!(curvature_bound(&h, 0.5).is_err());
    }

    /// Dense-sampling oracle: the closed-form bound dominates the tensor norms
    /// recomputed from the Ricci callback, and is attained.
    #[test]
    fn curvature_bound_dominates_sampled_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for m in all_models() {
            let tau_max = m.horizon().min(1.0) * 0.8;
            let bound = curvature_bound(m.as_ref(), tau_max).unwrap();
            let mut sup: f64 = 0.0;
            for k in 0..=200 {
                let tau = tau_max * k as f64 / 200.0;
                for _ in 0..20 {
                    let x = random_point(m.as_ref(), &mut rng);
                    let (rm, ric) = curvature_norms(m.as_ref(), tau, &x);
                    sup = sup.max(rm).max(ric);
                }
            }
            assert!(sup <= bound * (1.0 + 1e-12), "{}: {sup} > {bound}", m.id());
            if m.exact_flow() && m.id() != "euclidean" {
                assert!(sup >= bound * (1.0 - 1e-12), "{}: bound not attained", m.id());
            }
        }
    }

    #[test]
    fn registry_builds_by_name() {
        let reg = ModelRegistry::builtin();
        let m = reg.build("sphere", &ModelParams { dim: 2, ..Default::default() }).unwrap();
        assert_eq!(m.ambient_dim(), 3);
        assert!(matches!(reg.build("torus", &ModelParams::default()), Err(LabError::Unknown { .. })));
        assert_eq!(reg.names(), vec!["bump", "euclidean", "hyperbolic", "sphere"]);
    }
}
