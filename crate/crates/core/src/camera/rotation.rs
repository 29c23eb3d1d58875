//! Rotation parameterizations and their vector-Jacobian products.
//!
//! Both forms produce a matrix whose columns are the camera axes expressed in
//! world coordinates.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Smallest column norm accepted by the 6D Gram-Schmidt construction.
pub const SIXD_MIN_NORM: f64 = 1e-8;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula for a rotation vector (axis times angle).
pub fn axis_angle_matrix(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let k = skew(w);
    if theta < 1e-12 {
        return Matrix3::identity() + k;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Matrix3::identity() + k * a + k * k * b
}

/// dL/dw given dL/dR, via the closed form of Gallego and Yezzi for the
/// derivative of the exponential map.
pub fn axis_angle_backward(w: &Vector3<f64>, grad_r: &Matrix3<f64>) -> Vector3<f64> {
    let theta2 = w.norm_squared();
    let mut out = Vector3::zeros();
    if theta2 < 1e-24 {
        for i in 0..3 {
            let dr = skew(&Vector3::ith(i, 1.0));
            out[i] = grad_r.component_mul(&dr).sum();
        }
        return out;
    }
    let r = axis_angle_matrix(w);
    let wx = skew(w);
    let i_minus_r = Matrix3::identity() - r;
    for i in 0..3 {
        let ei = Vector3::ith(i, 1.0);
        let dr = (wx * w[i] + skew(&w.cross(&(i_minus_r * ei)))) * r / theta2;
        out[i] = grad_r.component_mul(&dr).sum();
    }
    out
}

/// Gram-Schmidt on the two 3-vectors `a[0..3]` and `a[3..6]`; the third
/// column is their cross product.
pub fn sixd_matrix(a: &[f64; 6]) -> Result<Matrix3<f64>> {
    let a1 = Vector3::new(a[0], a[1], a[2]);
    let a2 = Vector3::new(a[3], a[4], a[5]);
    let n1 = a1.norm();
    if !(n1 >= SIXD_MIN_NORM) {
        return Err(Error::Config(format!(
            "6D rotation: first column norm {n1} is below {SIXD_MIN_NORM}"
        )));
    }
    let b1 = a1 / n1;
    let u2 = a2 - b1 * b1.dot(&a2);
    let n2 = u2.norm();
    if !(n2 >= SIXD_MIN_NORM) {
        return Err(Error::Config("6D rotation: columns are (nearly) parallel".into()));
    }
    let b2 = u2 / n2;
    let b3 = b1.cross(&b2);
    Ok(Matrix3::from_columns(&[b1, b2, b3]))
}

/// dL/da for the 6D construction given dL/dR.
pub fn sixd_backward(a: &[f64; 6], grad_r: &Matrix3<f64>) -> [f64; 6] {
    let a1 = Vector3::new(a[0], a[1], a[2]);
    let a2 = Vector3::new(a[3], a[4], a[5]);
    let n1 = a1.norm();
    let b1 = a1 / n1;
    let k = b1.dot(&a2);
    let u2 = a2 - b1 * k;
    let n2 = u2.norm();
    let b2 = u2 / n2;

    let g3: Vector3<f64> = grad_r.column(2).into();
    let mut g_b1: Vector3<f64> = grad_r.column(0).into();
    let mut g_b2: Vector3<f64> = grad_r.column(1).into();
    // b3 = b1 x b2
    g_b1 += b2.cross(&g3);
    g_b2 += g3.cross(&b1);
    // b2 = u2 / |u2|
    let g_u2 = (g_b2 - b2 * b2.dot(&g_b2)) / n2;
    // u2 = a2 - (b1 . a2) b1
    let g_a2 = g_u2 - b1 * g_u2.dot(&b1);
    g_b1 -= a2 * g_u2.dot(&b1) + g_u2 * k;
    // b1 = a1 / |a1|
    let g_a1 = (g_b1 - b1 * b1.dot(&g_b1)) / n1;
    [g_a1.x, g_a1.y, g_a1.z, g_a2.x, g_a2.y, g_a2.z]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormal_error(r: &Matrix3<f64>) -> f64 {
        (r.transpose() * r - Matrix3::identity()).abs().max()
    }

    #[test]
    fn axis_angle_matches_nalgebra() {
        let w = Vector3::new(0.3, -1.1, 0.7);
        let ours = axis_angle_matrix(&w);
        let theirs = nalgebra::Rotation3::new(w).into_inner();
        assert!((ours - theirs).abs().max() < 1e-14);
        assert!(orthonormal_error(&ours) < 1e-12);
        assert!((ours.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sixd_identity_and_errors() {
        let r = sixd_matrix(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(r, Matrix3::identity());
        assert!(sixd_matrix(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).is_err());
        assert!(sixd_matrix(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn sixd_is_invariant_to_positive_column_scaling() {
        let a = [0.2, -0.4, 1.3, 0.9, 0.1, -0.2];
        let base = sixd_matrix(&a).unwrap();
        for (s1, s2) in [(3.0, 1.0), (1.0, 0.01), (17.0, 250.0)] {
            let b = [a[0] * s1, a[1] * s1, a[2] * s1, a[3] * s2, a[4] * s2, a[5] * s2];
            let r = sixd_matrix(&b).unwrap();
            assert!((r - base).abs().max() < 1e-6);
        }
        assert!(orthonormal_error(&base) < 1e-12);
        assert!((base.determinant() - 1.0).abs() < 1e-12);
    }

    fn loss(r: &Matrix3<f64>, g: &Matrix3<f64>) -> f64 {
        r.component_mul(g).sum()
    }

    #[test]
    fn axis_angle_backward_matches_central_differences() {
        let g = Matrix3::new(0.3, -1.0, 0.5, 0.7, 0.2, -0.4, 1.1, -0.6, 0.9);
        for w in [
            Vector3::new(0.3, -1.1, 0.7),
            Vector3::new(1e-3, 2e-3, -1e-3),
            Vector3::new(2.5, 0.1, 0.4),
        ] {
            let an = axis_angle_backward(&w, &g);
            for i in 0..3 {
                let h = 1e-6;
                let mut wp = w;
                wp[i] += h;
                let mut wm = w;
                wm[i] -= h;
                let fd = (loss(&axis_angle_matrix(&wp), &g) - loss(&axis_angle_matrix(&wm), &g)) / (2.0 * h);
                assert!((fd - an[i]).abs() < 1e-7, "w={w:?} i={i} fd={fd} an={}", an[i]);
            }
        }
    }

    #[test]
    fn axis_angle_backward_at_zero() {
        let g = Matrix3::new(0.3, -1.0, 0.5, 0.7, 0.2, -0.4, 1.1, -0.6, 0.9);
        let an = axis_angle_backward(&Vector3::zeros(), &g);
        for i in 0..3 {
            let h = 1e-6;
            let wp = Vector3::ith(i, h);
            let wm = Vector3::ith(i, -h);
            let fd = (loss(&axis_angle_matrix(&wp), &g) - loss(&axis_angle_matrix(&wm), &g)) / (2.0 * h);
            assert!((fd - an[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn sixd_backward_matches_central_differences() {
        let g = Matrix3::new(0.3, -1.0, 0.5, 0.7, 0.2, -0.4, 1.1, -0.6, 0.9);
        let a = [0.2, -0.4, 1.3, 0.9, 0.1, -0.2];
        let an = sixd_backward(&a, &g);
        for i in 0..6 {
            let h = 1e-6;
            let mut ap = a;
            ap[i] += h;
            let mut am = a;
            am[i] -= h;
            let fd = (loss(&sixd_matrix(&ap).unwrap(), &g) - loss(&sixd_matrix(&am).unwrap(), &g)) / (2.0 * h);
            assert!((fd - an[i]).abs() < 1e-7, "i={i} fd={fd} an={}", an[i]);
        }
    }
}
