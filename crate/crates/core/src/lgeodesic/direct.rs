//! Direct minimization of the discretized L-length, used as an independent
//! oracle for shooting and as its fallback.

use super::{lagrangian, validate_times, LPath};
use crate::error::{LabError, Result};
use crate::geometry::{check_point, ChartPoint, MetricModel};
use crate::linalg::Vect;
use crate::pathopt::{minimize, DiscretePath, PathOptConfig};

#[derive(Clone, Debug)]
pub struct DirectPath {
    pub s: Vec<f64>,
    pub nodes: Vec<Vect>,
    pub value: f64,
}

impl DirectPath {
    /// One-sided second-order estimate of `Z = (dy/ds)(s_1) / 2`.
    pub fn initial_z(&self) -> Vect {
        let h = self.s[1] - self.s[0];
        let v = (self.nodes[1] * 4.0 - self.nodes[0] * 3.0 - self.nodes[2]) / (2.0 * h);
        v * 0.5
    }
}

pub(crate) fn direct_path(model: &dyn MetricModel, x: &Vect, s1: f64, y: &Vect, s2: f64, nodes: usize, init: Option<&LPath>) -> Result<DirectPath> {
    if nodes < 3 {
        return Err(LabError::Invalid("direct path needs at least 3 nodes".into()));
    }
    let s: Vec<f64> = (0..nodes).map(|k| s1 + (s2 - s1) * k as f64 / (nodes - 1) as f64).collect();
    let mut pts: Vec<Vect> = match init {
        Some(p) => {
            // nearest-node resampling of a previous path on the same interval
            let m = p.len() - 1;
            (0..nodes).map(|k| p.points[(k * m + (nodes - 1) / 2) / (nodes - 1)]).collect()
        }
        None => {
            let tau1 = s1 * s1;
            let v = model.log_map(tau1, x, y);
            (0..nodes).map(|k| model.exp_map(tau1, x, &(v * (k as f64 / (nodes - 1) as f64)))).collect()
        }
    };
    pts[0] = *x;
    pts[nodes - 1] = *y;
    let mut path = DiscretePath { params: s.clone(), nodes: pts };
    let lag = |s: f64, mid: &Vect, vel: &Vect| lagrangian(model, s, mid, vel);
    let value = minimize(model, lag, &mut path, &PathOptConfig::default());
    if !value.is_finite() {
        return Err(LabError::BlowUp(s2));
    }
    Ok(DirectPath { s, nodes: path.nodes, value })
}

/// L-distance by direct minimization over `nodes`-node paths in `s`-time.
pub fn direct_q(model: &dyn MetricModel, x: &ChartPoint, tau1: f64, y: &ChartPoint, tau2: f64, nodes: usize) -> Result<DirectPath> {
    validate_times(model, tau1, tau2)?;
    check_point(model, x)?;
    check_point(model, y)?;
    direct_path(model, &x.coords, tau1.sqrt(), &y.coords, tau2.sqrt(), nodes, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ExpandingSphere, StaticEuclidean};

    #[test]
    fn flat_direct_value() {
        let m = StaticEuclidean::new(2);
        let x = ChartPoint::new(&m, &[0.0, 0.0]).unwrap();
        let y = ChartPoint::new(&m, &[1.0, 0.0]).unwrap();
        let d = direct_q(&m, &x, 0.0, &y, 1.0, 200).unwrap();
        assert!((d.value - 0.5).abs() < 1e-10);
        assert!((d.initial_z() - Vect::new(0.5, 0.0, 0.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn sphere_diagonal_direct_value_is_the_constant_path() {
        let m = ExpandingSphere::new(2);
        let x = ChartPoint::new(&m, &[0.0, 0.0, 1.0]).unwrap();
        let d = direct_q(&m, &x, 0.0, &x, 1.0, 200).unwrap();
        let constant = 2.0 - 2f64.sqrt() * 2f64.sqrt().atan();
        assert!((d.value - constant).abs() < 1e-4, "{}", d.value);
    }
}
