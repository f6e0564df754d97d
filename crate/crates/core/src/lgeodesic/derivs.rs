//! First derivatives of `Q` from the boundary velocities of the minimizer.
//!
//! With `p = dy/ds`: `grad_y Q = p(s_2)`, `grad_x Q = -p(s_1) = -2 Z`,
//! `d Q / d tau_2 = s_2 R(y, tau_2) - |p(s_2)|^2 / (4 s_2)` and
//! `d Q / d tau_1 = |p(s_1)|^2 / (4 s_1) - s_1 R(x, tau_1)`.

use super::QResult;
use crate::error::{LabError, Result};
use crate::geometry::{ChartPoint, MetricModel, TangentVector};

fn off_cut(q: &QResult) -> Result<()> {
    if q.multiplicity_flag {
        return Err(LabError::OnCutLocus);
    }
    Ok(())
}

pub fn grad2_q(model: &dyn MetricModel, q: &QResult) -> Result<TangentVector> {
    off_cut(q)?;
    let path = &q.geodesic.path;
    let base = ChartPoint::from_vect(model, *path.end())?;
    TangentVector::new(model, base, *path.velocities.last().expect("nonempty path"))
}

pub fn grad1_q(model: &dyn MetricModel, q: &QResult) -> Result<TangentVector> {
    off_cut(q)?;
    let path = &q.geodesic.path;
    let base = ChartPoint::from_vect(model, *path.start())?;
    TangentVector::new(model, base, -path.velocities[0])
}

pub fn dt2_q(model: &dyn MetricModel, q: &QResult) -> Result<f64> {
    off_cut(q)?;
    let path = &q.geodesic.path;
    let k = path.len() - 1;
    let (s, tau) = (path.s[k], path.tau(k));
    let y = path.end();
    Ok(s * model.scalar(tau, y) - model.norm2(tau, y, &path.velocities[k]) / (4.0 * s))
}

pub fn dt1_q(model: &dyn MetricModel, q: &QResult) -> Result<f64> {
    off_cut(q)?;
    let path = &q.geodesic.path;
    let (s, tau) = (path.s[0], path.tau(0));
    if s == 0.0 {
        return Err(LabError::Undefined("d Q / d tau_1 at tau_1 = 0"));
    }
    let x = path.start();
    Ok(model.norm2(tau, x, &path.velocities[0]) / (4.0 * s) - s * model.scalar(tau, x))
}
