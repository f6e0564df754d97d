//! Fixed-size storage for points, tangent vectors and frames.
//!
//! Every model lives in at most four ambient coordinates (the 3-sphere embedded
//! in R^4 is the largest). Unused trailing components are kept at zero, so
//! plain dot products and matrix products work for any dimension without heap
//! allocation.

use nalgebra::{Matrix4, Vector4};

pub const MAX_AMBIENT: usize = 4;

pub type Vect = Vector4<f64>;
pub type Mat = Matrix4<f64>;

/// Builds a padded vector from a slice of at most four entries.
pub fn vect(xs: &[f64]) -> Vect {
    assert!(xs.len() <= MAX_AMBIENT, "at most {MAX_AMBIENT} coordinates");
    let mut v = Vect::zeros();
    for (i, x) in xs.iter().enumerate() {
        v[i] = *x;
    }
    v
}

pub fn to_vec(v: &Vect, n: usize) -> Vec<f64> {
    v.iter().take(n).copied().collect()
}

/// Bilinear form `a^T g b`.
#[inline]
pub fn quad(g: &Mat, a: &Vect, b: &Vect) -> f64 {
    a.dot(&(g * b))
}

/// Modified Gram-Schmidt on the first `k` columns of `cols`, with respect to the
/// inner product `g`. Columns beyond `k` are zeroed.
pub fn gram_schmidt(g: &Mat, cols: &Mat, k: usize) -> Option<Mat> {
    let mut out = Mat::zeros();
    for i in 0..k {
        let mut v: Vect = cols.column(i).into();
        for j in 0..i {
            let e: Vect = out.column(j).into();
            v -= e * quad(g, &v, &e);
        }
        let n2 = quad(g, &v, &v);
        if !(n2 > 1e-300) || !n2.is_finite() {
            return None;
        }
        out.set_column(i, &(v / n2.sqrt()));
    }
    Some(out)
}

/// `max_{i,j<k} |<u_i, u_j>_g - delta_ij|`.
pub fn orthonormality_defect(g: &Mat, cols: &Mat, k: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..k {
        let a: Vect = cols.column(i).into();
        for j in 0..k {
            let b: Vect = cols.column(j).into();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((quad(g, &a, &b) - target).abs());
        }
    }
    worst
}

/// Nearest orthogonal matrix to the leading `k x k` block (polar factor).
pub fn polar_orthogonal(m: &Mat, k: usize) -> Mat {
    let block = nalgebra::DMatrix::from_fn(k, k, |i, j| m[(i, j)]);
    let svd = block.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let q = u * vt;
    let mut out = Mat::zeros();
    for i in 0..k {
        for j in 0..k {
            out[(i, j)] = q[(i, j)];
        }
    }
    out
}

/// Max-abs entry.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_schmidt_is_orthonormal_under_scaled_metric() {
        let g = Mat::from_diagonal(&vect(&[3.0, 3.0, 0.0, 0.0]));
        let cols = Mat::from_columns(&[vect(&[1.0, 1.0]), vect(&[0.0, 2.0]), Vect::zeros(), Vect::zeros()]);
        let e = gram_schmidt(&g, &cols, 2).unwrap();
        assert!(orthonormality_defect(&g, &e, 2) < 1e-14);
    }

    #[test]
    fn polar_factor_of_rotation_times_scale() {
        let (c, s) = (0.3_f64.cos(), 0.3_f64.sin());
        let mut m = Mat::zeros();
        m[(0, 0)] = 2.0 * c;
        m[(0, 1)] = -2.0 * s;
        m[(1, 0)] = 2.0 * s;
        m[(1, 1)] = 2.0 * c;
        let q = polar_orthogonal(&m, 2);
        assert!((q[(0, 0)] - c).abs() < 1e-14 && (q[(1, 0)] - s).abs() < 1e-14);
    }
}
