//! Matrix normal distribution `MN(M, Psi, Sigma)`: `M` is `n x p`, `Psi` the
//! `n x n` row covariance, `Sigma` the `p x p` column covariance. Column
//! stacking gives `vec(X) ~ N(vec(M), Sigma ⊗ Psi)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Mat};
use crate::rng::SeededRng;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct MatrixGaussian {
    mean: Mat,
    row_cov: Mat,
    col_cov: Mat,
    row_chol: Cholesky,
    col_chol: Cholesky,
}

impl MatrixGaussian {
    pub fn new(mean: Mat, row_cov: Mat, col_cov: Mat) -> Result<Self> {
        let (n, p) = mean.shape();
        if row_cov.shape() != (n, n) {
            return Err(Error::ShapeMismatch {
                op: "matrix gaussian row covariance",
                left: mean.shape(),
                right: row_cov.shape(),
            });
        }
        if col_cov.shape() != (p, p) {
            return Err(Error::ShapeMismatch {
                op: "matrix gaussian column covariance",
                left: mean.shape(),
                right: col_cov.shape(),
            });
        }
        if !row_cov.is_symmetric(SYMMETRY_TOL * row_cov.max_abs().max(1.0)) {
            return Err(Error::SingularCovariance("row covariance is not symmetric"));
        }
        if !col_cov.is_symmetric(SYMMETRY_TOL * col_cov.max_abs().max(1.0)) {
            return Err(Error::SingularCovariance("column covariance is not symmetric"));
        }
        let row_chol =
            Cholesky::new(&row_cov).map_err(|_| Error::SingularCovariance("row covariance is not positive definite"))?;
        let col_chol =
            Cholesky::new(&col_cov).map_err(|_| Error::SingularCovariance("column covariance is not positive definite"))?;
        Ok(MatrixGaussian {
            mean,
            row_cov,
            col_cov,
            row_chol,
            col_chol,
        })
    }

    /// `MN(0, eps1 I_n, eps2 I_p)`, the noise of the linear dynamics.
    pub fn isotropic(n: usize, p: usize, eps1: f64, eps2: f64) -> Result<Self> {
        Self::new(Mat::zeros(n, p), Mat::identity(n).scale(eps1), Mat::identity(p).scale(eps2))
    }

    pub fn mean(&self) -> &Mat {
        &self.mean
    }

    pub fn row_cov(&self) -> &Mat {
        &self.row_cov
    }

    pub fn col_cov(&self) -> &Mat {
        &self.col_cov
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mean.shape()
    }

    /// `M + L_r G L_c^T` with `G` standard normal.
    pub fn sample(&self, rng: &mut SeededRng) -> Mat {
        let (n, p) = self.shape();
        let g = Mat::from_fn(n, p, |_, _| rng.normal());
        self.row_chol
            .factor()
            .matmul(&g)
            .matmul_t(self.col_chol.factor())
            .add(&self.mean)
    }

    /// `Tr(Sigma^-1 D^T Psi^-1 D)` with `D = X - M`.
    fn mahalanobis(&self, x: &Mat) -> f64 {
        let d = x.sub(&self.mean);
        let a = self.row_chol.solve(&d); // Psi^-1 D
        let b = self.col_chol.solve(&d.t_matmul(&a)); // Sigma^-1 D^T Psi^-1 D
        b.trace()
    }

    pub fn log_density(&self, x: &Mat) -> Result<f64> {
        if x.shape() != self.shape() {
            return Err(Error::ShapeMismatch {
                op: "log_density",
                left: self.shape(),
                right: x.shape(),
            });
        }
        let (n, p) = self.shape();
        let (nf, pf) = (n as f64, p as f64);
        Ok(-0.5 * nf * pf * (2.0 * PI).ln()
            - 0.5 * pf * self.row_chol.log_det()
            - 0.5 * nf * self.col_chol.log_det()
            - 0.5 * self.mahalanobis(x))
    }

    /// Differential entropy `½ np ln(2πe) + ½(p ln|Psi| + n ln|Sigma|)`.
    pub fn entropy(&self) -> f64 {
        let (n, p) = self.shape();
        let (nf, pf) = (n as f64, p as f64);
        0.5 * nf * pf * (2.0 * PI * std::f64::consts::E).ln()
            + 0.5 * (pf * self.row_chol.log_det() + nf * self.col_chol.log_det())
    }
}

/// `KL(p1 || p2)`.
pub fn kl_divergence(p1: &MatrixGaussian, p2: &MatrixGaussian) -> Result<f64> {
    if p1.shape() != p2.shape() {
        return Err(Error::ShapeMismatch {
            op: "kl_divergence",
            left: p1.shape(),
            right: p2.shape(),
        });
    }
    let (n, p) = p1.shape();
    let (nf, pf) = (n as f64, p as f64);
    let log_det = pf * (p2.row_chol.log_det() - p1.row_chol.log_det())
        + nf * (p2.col_chol.log_det() - p1.col_chol.log_det());
    let tr_row = p2.row_chol.solve(&p1.row_cov).trace();
    let tr_col = p2.col_chol.solve(&p1.col_cov).trace();
    let quad = p2.mahalanobis(&p1.mean);
    let kl = 0.5 * (log_det - nf * pf + tr_row * tr_col + quad);
    if !kl.is_finite() {
        return Err(Error::SingularCovariance("non-finite KL divergence"));
    }
    Ok(kl)
}

/// Fisher information the state receives from one input: `Tr(W^T W)/(eps1 eps2)`.
pub fn input_fisher_information(w: &Mat, eps1: f64, eps2: f64) -> Result<f64> {
    if !(eps1 > 0.0 && eps2 > 0.0) {
        return Err(Error::invalid("noise scales must be positive"));
    }
    Ok(w.frobenius_norm_sq() / (eps1 * eps2))
}
