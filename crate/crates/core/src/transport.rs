//! Space-time parallel transport along L-geodesics.
//!
//! A field `Z` along `gamma` is space-time parallel when
//! `nabla^tau_{gamma_dot} Z = -Ric^sharp_tau(Z)`. In `s = sqrt(tau)` time this
//! reads `dZ/ds = -Gamma(y', Z) - 2 s Ric^sharp(Z)`, and `|Z|_{g_tau}` is then
//! constant because `d_tau g = 2 Ric`. For metric families that are not Ricci
//! flows the Ricci term is replaced by `1/2 g^{-1} d_tau g`, which keeps the
//! transport an isometry.

use crate::error::Result;
use crate::geometry::{ChartPoint, MetricModel, TangentVector};
use crate::lgeodesic::{LGeodesic, LPath};
use crate::linalg::{gram_schmidt, orthonormality_defect, Mat, Vect};

fn rhs(model: &dyn MetricModel, s: f64, y: &Vect, p: &Vect, z: &Vect) -> Vect {
    let tau = s * s;
    let ric = if model.exact_flow() {
        model.ricci_apply(tau, y, z)
    } else {
        crate::lgeodesic::flow_endomorphism(model, tau, y, z) * 0.5
    };
    -model.christoffel(tau, y, p, z) - ric * (2.0 * s)
}

/// Transports the first `k` columns of `cols` from the start to the end of
/// `path`. RK4 with step `2h` over node triples, so the path and its
/// velocities are used exactly as the geodesic solver produced them.
pub fn transport_columns(model: &dyn MetricModel, path: &LPath, cols: &Mat, k: usize) -> Mat {
    let mut out = *cols;
    for c in 0..k {
        let mut z: Vect = cols.column(c).into();
        for (_, zk) in walk(model, path, z) {
            z = zk;
        }
        out.set_column(c, &z);
    }
    out
}

/// Values of the transported field at every other node, starting at node 0.
fn walk<'a>(model: &'a dyn MetricModel, path: &'a LPath, z0: Vect) -> impl Iterator<Item = (usize, Vect)> + 'a {
    let n = path.len() - 1;
    assert!(n.is_multiple_of(2), "transport needs an even number of path intervals");
    let mut z = model.project_tangent(&path.points[0], &z0);
    let mut k = 0;
    std::iter::once((0, z)).chain(std::iter::from_fn(move || {
        if k >= n {
            return None;
        }
        let (s0, s1) = (path.s[k], path.s[k + 2]);
        let h = s1 - s0;
        let sm = path.s[k + 1];
        let (y0, ym, y1) = (&path.points[k], &path.points[k + 1], &path.points[k + 2]);
        let (p0, pm, p1) = (&path.velocities[k], &path.velocities[k + 1], &path.velocities[k + 2]);
        let k1 = rhs(model, s0, y0, p0, &z);
        let k2 = rhs(model, sm, ym, pm, &(z + k1 * (0.5 * h)));
        let k3 = rhs(model, sm, ym, pm, &(z + k2 * (0.5 * h)));
        let k4 = rhs(model, s1, y1, p1, &(z + k3 * h));
        z = model.project_tangent(y1, &(z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)));
        k += 2;
        Some((k, z))
    }))
}

/// The transported field sampled at every other node of the geodesic.
pub fn transported_field(model: &dyn MetricModel, path: &LPath, z0: &Vect) -> Vec<(usize, Vect)> {
    walk(model, path, *z0).collect()
}

pub fn transport_along(model: &dyn MetricModel, geod: &LGeodesic, xi: &TangentVector) -> Result<TangentVector> {
    let path = &geod.path;
    let mut z = xi.components;
    for (_, zk) in walk(model, path, z) {
        z = zk;
    }
    TangentVector::new(model, ChartPoint::from_vect(model, *path.end())?, z)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransportMap {
    pub source: ChartPoint,
    pub tau1: f64,
    pub target: ChartPoint,
    pub tau2: f64,
    /// Acts on ambient components at the source.
    pub matrix: Mat,
    /// `max |<P e_i, P e_j>_{tau2} - delta_ij|` over a `g_{tau1}`-orthonormal
    /// basis `e`.
    pub isometry_defect: f64,
}

impl TransportMap {
    pub fn apply(&self, v: &Vect) -> Vect {
        self.matrix * v
    }
}

pub fn transport_map(model: &dyn MetricModel, geod: &LGeodesic) -> Result<TransportMap> {
    let path = &geod.path;
    let d = model.dim();
    let (x, y) = (path.start(), path.end());
    let (tau1, tau2) = (geod.tau1(), geod.tau2());
    let g1 = model.metric(tau1, x);
    let e = gram_schmidt(&g1, &model.tangent_basis(x), d).ok_or(crate::error::LabError::DegenerateMetric)?;
    let pe = transport_columns(model, path, &e, d);
    // P = sum_i (P e_i) (g1 e_i)^T
    let matrix = pe * (g1 * e).transpose();
    let isometry_defect = orthonormality_defect(&model.metric(tau2, y), &pe, d);
    Ok(TransportMap {
        source: ChartPoint::from_vect(model, *x)?,
        tau1,
        target: ChartPoint::from_vect(model, *y)?,
        tau2,
        matrix,
        isometry_defect,
    })
}

/// `|nabla^tau_{gamma_dot} W + Ric^sharp(W)|_{g_tau}` at interior nodes for a
/// field `W` sampled at every node, with `dW/ds` by central differences.
pub fn spacetime_parallel_defect(model: &dyn MetricModel, path: &LPath, field: &[Vect]) -> Vec<f64> {
    (1..path.len() - 1)
        .filter(|k| path.s[*k] > 0.0)
        .map(|k| {
            let s = path.s[k];
            let tau = s * s;
            let (y, p) = (&path.points[k], &path.velocities[k]);
            let dw = (field[k + 1] - field[k - 1]) / (path.s[k + 1] - path.s[k - 1]);
            let cov = (dw + model.christoffel(tau, y, p, &field[k])) / (2.0 * s);
            let r = model.project_tangent(y, &(cov + model.ricci_apply(tau, y, &field[k])));
            model.norm2(tau, y, &r).sqrt()
        })
        .collect()
}
