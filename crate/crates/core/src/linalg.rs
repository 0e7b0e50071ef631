//! Small dense complex helpers shared by the solvers.

use nalgebra::DMatrix;

use crate::{CMat, CVec, Error, Result, C64};

/// `e^{j theta}` for every phase.
pub fn unit_vector(phases: &[f64]) -> CVec {
    CVec::from_iterator(phases.len(), phases.iter().map(|&t| C64::from_polar(1.0, t)))
}

/// Element phases of a (nominally unit-modulus) vector, wrapped to `[0, 2pi)`.
pub fn phases_of(v: &CVec) -> Vec<f64> {
    v.iter().map(|z| crate::circuit::wrap_phase(z.arg())).collect()
}

/// Largest deviation of `|v_m|` from one.
pub fn modulus_error(v: &CVec) -> f64 {
    v.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max)
}

/// Projects every entry onto the unit circle; zero entries map to `1`.
pub fn normalize_entries(v: &CVec) -> CVec {
    v.map(|z| {
        let n = z.norm();
        if n > 0.0 {
            z / n
        } else {
            C64::new(1.0, 0.0)
        }
    })
}

/// `diag(theta) * g`.
pub fn scale_rows(theta: &CVec, g: &CMat) -> CMat {
    let mut out = g.clone();
    for (mut row, t) in out.row_iter_mut().zip(theta.iter()) {
        row *= *t;
    }
    out
}

/// Real part of `a^H b`.
pub fn re_inner(a: &CVec, b: &CVec) -> f64 {
    a.dotc(b).re
}

/// Solves the Hermitian positive-definite system `a x = b`.
pub fn solve_hpd(a: CMat, b: &CVec) -> Result<CVec> {
    let n = a.nrows();
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    a.lu()
        .solve(b)
        .filter(|x| x.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
        .ok_or_else(|| Error::Dimension(format!("singular {n}x{n} system")))
}

pub fn solve_real(a: DMatrix<f64>, b: &nalgebra::DVector<f64>) -> Option<nalgebra::DVector<f64>> {
    a.lu().solve(b).filter(|x| x.iter().all(|v| v.is_finite()))
}

pub fn relative_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_rows_matches_diag_product() {
        let theta = unit_vector(&[0.3, -1.2]);
        let g = CMat::from_fn(2, 3, |i, j| C64::new(i as f64 + 1.0, j as f64 - 0.5));
        let expected = CMat::from_diagonal(&theta) * &g;
        assert!((scale_rows(&theta, &g) - expected).norm() < 1e-14);
    }

    #[test]
    fn hpd_solve_roundtrip() {
        let a = CMat::from_row_slice(
            2,
            2,
            &[C64::new(4.0, 0.0), C64::new(1.0, 1.0), C64::new(1.0, -1.0), C64::new(3.0, 0.0)],
        );
        let x = CVec::from_vec(vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.25)]);
        let b = &a * &x;
        let got = solve_hpd(a, &b).unwrap();
        assert!((got - x).norm() < 1e-12);
    }

    #[test]
    fn normalize_handles_zero() {
        let v = CVec::from_vec(vec![C64::new(0.0, 0.0), C64::new(0.0, 3.0)]);
        let n = normalize_entries(&v);
        assert_eq!(n[0], C64::new(1.0, 0.0));
        assert!((n[1] - C64::new(0.0, 1.0)).norm() < 1e-15);
        assert!(modulus_error(&n) < 1e-15);
    }
}
