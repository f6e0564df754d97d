use super::MetricModel;
use crate::linalg::{Mat, Vect};

/// `g_tau` = identity on `R^d`; Ricci-flat, so every `tau` is allowed.
#[derive(Debug, Clone)]
pub struct StaticEuclidean {
    d: usize,
    eye: Mat,
}

impl StaticEuclidean {
    pub fn new(d: usize) -> Self {
        assert!((1..=3).contains(&d), "StaticEuclidean supports d in 1..=3");
        let mut eye = Mat::zeros();
        for i in 0..d {
            eye[(i, i)] = 1.0;
        }
        Self { d, eye }
    }
}

impl MetricModel for StaticEuclidean {
    fn id(&self) -> &'static str {
        "euclidean"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn ambient_dim(&self) -> usize {
        self.d
    }
    fn horizon(&self) -> f64 {
        f64::INFINITY
    }
    fn exact_flow(&self) -> bool {
        true
    }
    fn chart_domain(&self) -> &'static str {
        "R^d"
    }
    fn contains(&self, x: &Vect) -> bool {
        x.iter().all(|c| c.is_finite()) && x.iter().skip(self.d).all(|c| *c == 0.0)
    }
    fn tangent_basis(&self, _x: &Vect) -> Mat {
        self.eye
    }
    fn metric(&self, _tau: f64, _x: &Vect) -> Mat {
        self.eye
    }
    fn metric_dot(&self, _tau: f64, _x: &Vect) -> Mat {
        Mat::zeros()
    }
    fn norm2(&self, _tau: f64, _x: &Vect, v: &Vect) -> f64 {
        v.norm_squared()
    }
    fn christoffel(&self, _tau: f64, _x: &Vect, _v: &Vect, _w: &Vect) -> Vect {
        Vect::zeros()
    }
    fn ricci_sharp(&self, _tau: f64, _x: &Vect) -> Mat {
        Mat::zeros()
    }
    fn ricci_apply(&self, _tau: f64, _x: &Vect, _v: &Vect) -> Vect {
        Vect::zeros()
    }
    fn scalar(&self, _tau: f64, _x: &Vect) -> f64 {
        0.0
    }
    fn grad_scalar(&self, _tau: f64, _x: &Vect) -> Vect {
        Vect::zeros()
    }
    fn distance(&self, _tau: f64, x: &Vect, y: &Vect) -> f64 {
        (x - y).norm()
    }
    fn log_map(&self, _tau: f64, x: &Vect, y: &Vect) -> Vect {
        y - x
    }
    fn exp_map(&self, _tau: f64, x: &Vect, v: &Vect) -> Vect {
        x + v
    }
    fn curvature_bound_on(&self, _tau_lo: f64, _tau_hi: f64) -> f64 {
        0.0
    }
}
