//! Small dense linear-algebra helpers shared by the modules.

use crate::{DMat, DVec, Mat3, Vec3};

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(a: &Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

pub fn singular_values(m: &DMat) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// 2-norm condition number; infinite for rank-deficient matrices.
pub fn condition_number(m: &DMat) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Numerical rank with threshold `rel_tol * sigma_max`.
pub fn numerical_rank(m: &DMat, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    let hi = sv.first().copied().unwrap_or(0.0);
    sv.iter().filter(|&&s| s > rel_tol * hi).count()
}

/// Spectral norm.
pub fn norm2(m: &DMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Relative least-squares residual ‖b − B x*‖ / ‖b‖ of projecting `b`
/// onto the column space of `basis`. Zero for a vanishing `b`.
pub fn span_residual(basis: &DMat, b: &DVec, rel_tol: f64) -> f64 {
    let bn = b.norm();
    if bn == 0.0 {
        return 0.0;
    }
    if basis.ncols() == 0 {
        return 1.0;
    }
    let svd = basis.clone().svd(true, true);
    let hi = svd.singular_values.max();
    let u = svd.u.as_ref().expect("requested U");
    let mut proj = DVec::zeros(b.len());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > rel_tol * hi {
            let col = u.column(k);
            proj += col * col.dot(b);
        }
    }
    (b - proj).norm() / bn
}
