use nalgebra::DMatrix;

use super::var::CopulaModel;
use crate::error::{Error, Result};

const PSI_TOL: f64 = 1e-13;
const MAX_TERMS: usize = 2_000_000;
pub const RESIDUAL_TOL: f64 = 1e-10;

/// MA(infinity) weights `Psi_j` of the VAR, truncated once a full window of
/// `p` consecutive weights is negligible. This is the first block row of
/// the companion-form Lyapunov series, computed through the sparse lag
/// structure only.
fn psi_weights(model: &CopulaModel) -> Result<Vec<DMatrix<f64>>> {
    let r = model.r;
    let p = model.order().max(1);
    let coefs: Vec<DMatrix<f64>> = (0..model.lags.len()).map(|k| model.coef(k)).collect();
    let mut psi = vec![DMatrix::identity(r, r)];
    let mut quiet = 0usize;
    let mut peak = 1.0f64;
    while quiet <= p {
        let j = psi.len();
        if j >= MAX_TERMS {
            return Err(Error::Numerical(format!(
                "autocovariance series not converged after {MAX_TERMS} terms"
            )));
        }
        let mut next = DMatrix::zeros(r, r);
        for (a, &h) in coefs.iter().zip(&model.lags) {
            if h <= j {
                next += a * &psi[j - h];
            }
        }
        let n = next.amax();
        if !n.is_finite() {
            return Err(Error::Numerical("autocovariance series diverged".into()));
        }
        peak = peak.max(n);
        if n < PSI_TOL * peak {
            quiet += 1;
        } else {
            quiet = 0;
        }
        psi.push(next);
    }
    Ok(psi)
}

/// `Gamma(h) = Cov(w_{t+h}, w_t)` for each requested `h`, verified against
/// the lag-0 Yule-Walker identity `Gamma(0) = sum_l A_l Gamma(l)' + Sigma_w`.
pub fn autocovariances(model: &CopulaModel, hs: &[usize]) -> Result<Vec<DMatrix<f64>>> {
    let psi = psi_weights(model)?;
    let sigma = model.sigma_matrix();
    // M_j = Sigma Psi_j'
    let m: Vec<DMatrix<f64>> = psi.iter().map(|p| &sigma * p.transpose()).collect();
    let gamma = |h: usize| {
        let mut g = DMatrix::zeros(model.r, model.r);
        for j in 0..psi.len().saturating_sub(h) {
            g += &psi[j + h] * &m[j];
        }
        g
    };
    let g0 = gamma(0);
    let mut resid = &g0 - &sigma;
    for (k, &l) in model.lags.iter().enumerate() {
        resid -= model.coef(k) * gamma(l).transpose();
    }
    let scale = g0.norm().max(f64::MIN_POSITIVE);
    let rel = resid.norm() / scale;
    if !(rel <= RESIDUAL_TOL) && g0.norm() > 0.0 {
        return Err(Error::Numerical(format!("autocovariance residual norm {rel:e}")));
    }
    Ok(hs.iter().map(|&h| if h == 0 { g0.clone() } else { gamma(h) }).collect())
}

/// Autocorrelation blocks `R(h) = D^{-1/2} Gamma(h) D^{-1/2}`.
pub fn autocorr_blocks(model: &CopulaModel, hs: &[usize]) -> Result<Vec<DMatrix<f64>>> {
    let mut all = vec![0];
    all.extend_from_slice(hs);
    let gammas = autocovariances(model, &all)?;
    let d: Vec<f64> = (0..model.r)
        .map(|j| {
            let v = gammas[0][(j, j)];
            if v > 0.0 {
                1.0 / v.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Ok(gammas[1..]
        .iter()
        .map(|g| DMatrix::from_fn(model.r, model.r, |a, b| g[(a, b)] * d[a] * d[b]))
        .collect())
}

/// Block-Toeplitz correlation matrix of `(w_t, w_{t-1}, ..., w_{t-n+1})`.
pub fn toeplitz_window(model: &CopulaModel, n: usize) -> Result<DMatrix<f64>> {
    let hs: Vec<usize> = (0..n).collect();
    let blocks = autocorr_blocks(model, &hs)?;
    let r = model.r;
    let mut omega = DMatrix::zeros(n * r, n * r);
    for a in 0..n {
        for b in 0..n {
            // Cov(w_{t-a}, w_{t-b}) = Gamma(b - a)
            let blk = if b >= a {
                blocks[b - a].clone()
            } else {
                blocks[a - b].transpose()
            };
            omega.view_mut((a * r, b * r), (r, r)).copy_from(&blk);
        }
    }
    Ok(omega)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ar1(a: f64) -> CopulaModel {
        CopulaModel::new(vec![1], vec![DMatrix::from_element(1, 1, a)], DMatrix::identity(1, 1)).unwrap()
    }

    #[test]
    fn ar1_closed_form() {
        let m = ar1(0.5);
        let g = autocovariances(&m, &[0]).unwrap();
        assert!((g[0][(0, 0)] - 4.0 / 3.0).abs() < 1e-12);
        let r = autocorr_blocks(&m, &[0, 1, 2, 5]).unwrap();
        for (k, h) in [0, 1, 2, 5].iter().enumerate() {
            assert!((r[k][(0, 0)] - 0.5f64.powi(*h)).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_var_has_diagonal_blocks() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.4, -0.3]));
        let b = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.2, 0.1]));
        let m = CopulaModel::new(vec![1, 4], vec![a, b], DMatrix::identity(2, 2)).unwrap();
        for blk in autocorr_blocks(&m, &[0, 1, 4, 9]).unwrap() {
            assert_eq!(blk[(0, 1)], 0.0);
            assert_eq!(blk[(1, 0)], 0.0);
        }
    }

    #[test]
    fn matches_dense_lyapunov_solution() {
        // independent route: vec(V) = (I - C kron C)^{-1} vec(Q) on the companion form
        let lags = vec![1, 3];
        let coefs = vec![
            DMatrix::from_row_slice(2, 2, &[0.3, 0.2, -0.1, 0.4]),
            DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.1, -0.3]),
        ];
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let m = CopulaModel::new(lags.clone(), coefs.clone(), sigma.clone()).unwrap();
        let c = super::super::var::companion(&lags, &coefs);
        let n = c.nrows();
        let mut q = DMatrix::zeros(n, n);
        q.view_mut((0, 0), (2, 2)).copy_from(&sigma);
        let kron = c.kronecker(&c);
        let lhs = DMatrix::identity(n * n, n * n) - kron;
        let vecq = nalgebra::DVector::from_column_slice(q.as_slice());
        let v = lhs.lu().solve(&vecq).unwrap();
        let big = DMatrix::from_column_slice(n, n, v.as_slice());
        let g = autocovariances(&m, &[0, 1, 2]).unwrap();
        for h in 0..3 {
            // block (0, h) of V is Cov(w_t, w_{t-h}) = Gamma(h)
            let blk = big.view((0, 2 * h), (2, 2));
            assert!((&g[h] - blk).amax() < 1e-10, "h={h}");
        }
    }

    #[test]
    fn negative_lag_identity() {
        let lags = vec![1, 2];
        let coefs = vec![
            DMatrix::from_row_slice(2, 2, &[0.3, 0.25, -0.1, 0.2]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.2, 0.1, 0.0]),
        ];
        let m = CopulaModel::new(lags, coefs, DMatrix::identity(2, 2)).unwrap();
        // Gamma(-1) = Cov(w_{t-1}, w_t), the transpose of Gamma(1); the block
        // (1,0) of the stacked window therefore equals Gamma(1)'
        let omega = toeplitz_window(&m, 2).unwrap();
        let r1 = autocorr_blocks(&m, &[1]).unwrap().remove(0);
        assert!((omega.view((2, 0), (2, 2)) - r1.transpose()).amax() < 1e-14);
        assert!((&omega - omega.transpose()).amax() < 1e-14);
        assert!(omega.clone().cholesky().is_some());
        assert!(r1[(0, 1)] != r1[(1, 0)]);
    }
}
