use nalgebra::DMatrix;

use super::autocov::autocorr_blocks;
use super::var::CopulaModel;
use crate::error::{Error, Result};

/// Kendall's tau of a bivariate Gaussian copula with correlation `phi`.
pub fn kendall_tau(phi: f64) -> Result<f64> {
    if !(phi.abs() <= 1.0) {
        return Err(Error::Domain {
            what: "latent correlation",
            value: phi,
        });
    }
    Ok(6.0 / std::f64::consts::PI * (phi / 2.0).asin())
}

/// Auto-dependence matrix `T(h)`: entry `(j, l)` is Kendall's tau between
/// `eps_{j,t}` and `eps_{l,t-h}`.
pub fn auto_dependence(model: &CopulaModel, h: usize) -> Result<DMatrix<f64>> {
    let r = autocorr_blocks(model, &[h])?.remove(0);
    // rounding can push a correlation a hair past 1
    Ok(r.map(|phi| kendall_tau(phi.clamp(-1.0, 1.0)).expect("clamped")))
}

/// Sample Kendall tau (tau-a), O(n^2); used for checks on modest samples.
pub fn sample_kendall(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0i64;
    for i in 0..n {
        for k in i + 1..n {
            let a = (x[i] - x[k]) * (y[i] - y[k]);
            s += (a > 0.0) as i64 - (a < 0.0) as i64;
        }
    }
    s as f64 / (n * (n - 1) / 2) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_points() {
        assert_eq!(kendall_tau(0.0).unwrap(), 0.0);
        assert!((kendall_tau(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((kendall_tau(-1.0).unwrap() + 1.0).abs() < 1e-15);
        assert!(kendall_tau(1.01).is_err());
        assert!(kendall_tau(f64::NAN).is_err());
    }

    #[test]
    fn odd_in_phi() {
        for k in 0..=200 {
            let phi = k as f64 / 200.0;
            assert_eq!(kendall_tau(-phi).unwrap(), -kendall_tau(phi).unwrap());
        }
    }

    #[test]
    fn lag_zero_matrix_is_symmetric_with_unit_diagonal() {
        let a = DMatrix::from_row_slice(2, 2, &[0.4, 0.3, 0.0, 0.2]);
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let m = CopulaModel::new(vec![1], vec![a], sigma).unwrap();
        let t0 = auto_dependence(&m, 0).unwrap();
        assert!((t0[(0, 0)] - 1.0).abs() < 1e-12 && (t0[(1, 1)] - 1.0).abs() < 1e-12);
        assert!((t0[(0, 1)] - t0[(1, 0)]).abs() < 1e-14);
        let t1 = auto_dependence(&m, 1).unwrap();
        assert!((t1[(0, 1)] - t1[(1, 0)]).abs() > 0.05);
    }

    #[test]
    fn sample_tau_of_monotone_pairs() {
        let x: Vec<f64> = (0..50).map(|k| k as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        assert_eq!(sample_kendall(&x, &y), 1.0);
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(sample_kendall(&x, &z), -1.0);
    }
}
