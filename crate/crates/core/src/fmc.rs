//! Fisher memory curves of the linear matrix dynamics
//!
//! `X(n) = U^T X(n-1) V + W s(n) + Z(n)`, `Z ~ MN(0, eps1 I, eps2 I)`,
//!
//! and of its vector counterpart `x(n) = W x(n-1) + v s(n) + z(n)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::input_fisher_information;
use crate::linalg::{
    eig_normal, random_convergent, random_gaussian, random_normal_convergent, solve_discrete_lyapunov,
    spectral_radius, Cholesky, Mat, DEFAULT_ITER_MAX, DEFAULT_TOL,
};
use crate::rng::SeededRng;

/// Series truncation tolerance used when a caller does not choose one.
pub const DEFAULT_CAPACITY_TOL: f64 = 1e-12;

/// Hard cap on truncation depth; only reached for radii extremely close to 1.
pub const MAX_TERMS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearMatrixDynamics {
    pub u: Mat,
    pub v: Mat,
    pub w: Mat,
    pub eps1: f64,
    pub eps2: f64,
}

impl LinearMatrixDynamics {
    pub fn new(u: Mat, v: Mat, w: Mat, eps1: f64, eps2: f64) -> Result<Self> {
        let n = u.rows();
        for (name, m) in [("U", &u), ("V", &v), ("W", &w)] {
            if !m.is_square() {
                return Err(Error::NotSquare {
                    op: "linear matrix dynamics",
                    rows: m.rows(),
                    cols: m.cols(),
                });
            }
            if m.rows() != n {
                return Err(Error::invalid(format!("{name} is {}x{}, expected {n}x{n}", m.rows(), m.cols())));
            }
            if !m.is_finite() {
                return Err(Error::invalid(format!("{name} has non-finite entries")));
            }
        }
        if n == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if !(eps1 > 0.0 && eps2 > 0.0) {
            return Err(Error::invalid("noise scales must be positive"));
        }
        Ok(LinearMatrixDynamics { u, v, w, eps1, eps2 })
    }

    /// 1x1 system with unit noise.
    pub fn scalar(u: f64, v: f64, w: f64) -> Self {
        Self::new(Mat::scalar(u), Mat::scalar(v), Mat::scalar(w), 1.0, 1.0).expect("valid scalar system")
    }

    /// Normal convergent `U`, `V`; Gaussian `W` scaled to `Tr(W^T W) = 1`;
    /// unit noise.
    pub fn random_normal(n: usize, radius_max: f64, rng: &mut SeededRng) -> Self {
        let u = random_normal_convergent(n, radius_max, rng);
        let v = random_normal_convergent(n, radius_max, rng);
        let w = unit_frobenius(random_gaussian(n, n, rng));
        Self::new(u, v, w, 1.0, 1.0).expect("valid random system")
    }

    /// As [`random_normal`](Self::random_normal) but with general (non-normal)
    /// connectivity.
    pub fn random_general(n: usize, radius_max: f64, rng: &mut SeededRng) -> Self {
        let u = random_convergent(n, radius_max, rng);
        let v = random_convergent(n, radius_max, rng);
        let w = unit_frobenius(random_gaussian(n, n, rng));
        Self::new(u, v, w, 1.0, 1.0).expect("valid random system")
    }

    pub fn n(&self) -> usize {
        self.u.rows()
    }

    pub fn radii(&self) -> (f64, f64) {
        (spectral_radius(&self.u), spectral_radius(&self.v))
    }

    pub fn is_stable(&self) -> bool {
        let (ru, rv) = self.radii();
        ru * rv < 1.0
    }

    pub fn is_normal(&self) -> bool {
        self.u.is_normal() && self.v.is_normal()
    }

    pub fn with_w(&self, w: Mat) -> Result<Self> {
        Self::new(self.u.clone(), self.v.clone(), w, self.eps1, self.eps2)
    }

    /// One step of the recursion.
    pub fn step(&self, x_prev: &Mat, s: f64, noise: Option<&Mat>) -> Mat {
        let mut x = Mat::bilinear(&self.u, x_prev, &self.v);
        x.axpy(s, &self.w);
        if let Some(z) = noise {
            x.add_assign(z);
        }
        x
    }
}

fn unit_frobenius(w: Mat) -> Mat {
    let f = w.frobenius_norm();
    w.scale(1.0 / f)
}

fn require_stable(dyn_: &LinearMatrixDynamics) -> Result<(f64, f64)> {
    let (ru, rv) = dyn_.radii();
    if !(ru * rv < 1.0) {
        return Err(Error::NonConvergent {
            residual: f64::INFINITY,
            iterations: 0,
            spectral_radius: ru * rv,
        });
    }
    Ok((ru, rv))
}

/// Truncated memory curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FmcSeries {
    pub values: Vec<f64>,
    pub cumulative: Vec<f64>,
    /// Sum of the computed terms.
    pub capacity: f64,
    /// Geometric bound on the sum of all omitted terms.
    pub truncation_error_bound: f64,
}

impl FmcSeries {
    pub fn from_values(values: Vec<f64>, truncation_error_bound: f64) -> Self {
        let mut cumulative = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        for v in &values {
            acc += v;
            cumulative.push(acc);
        }
        FmcSeries {
            values,
            cumulative,
            capacity: acc,
            truncation_error_bound,
        }
    }

    pub fn k_max(&self) -> usize {
        self.values.len().saturating_sub(1)
    }
}

/// Bound on `sum_{i > k} c r^(2i)`, i.e. `c r^(2(k+1)) / (1 - r^2)`.
pub fn geometric_tail(c: f64, r: f64, k: usize) -> f64 {
    if c == 0.0 || r == 0.0 {
        return 0.0;
    }
    let r2 = r * r;
    c * r2.powf((k + 1) as f64) / (1.0 - r2)
}

/// Smallest `k` with `geometric_tail(c, r, k) < tol`.
pub fn truncation_depth(c: f64, r: f64, tol: f64) -> usize {
    if c == 0.0 || r == 0.0 {
        return 0;
    }
    let r2 = r * r;
    let target = tol * (1.0 - r2) / c;
    // r2^(k+1) < target
    let k = (target.ln() / r2.ln()).ceil() - 1.0;
    let mut k = if k.is_finite() && k > 0.0 { (k as usize).min(MAX_TERMS) } else { 0 };
    while k < MAX_TERMS && geometric_tail(c, r, k) >= tol {
        k += 1;
    }
    k
}

/// `Psi`, `Sigma` and their Cholesky factors.
#[derive(Clone, Debug)]
pub struct StateCovariances {
    pub psi: Mat,
    pub sigma: Mat,
    pub psi_chol: Cholesky,
    pub sigma_chol: Cholesky,
}

impl StateCovariances {
    pub fn from_parts(psi: Mat, sigma: Mat) -> Result<Self> {
        let psi_chol = Cholesky::new(&psi).map_err(|_| Error::SingularCovariance("row covariance"))?;
        let sigma_chol = Cholesky::new(&sigma).map_err(|_| Error::SingularCovariance("column covariance"))?;
        Ok(StateCovariances {
            psi,
            sigma,
            psi_chol,
            sigma_chol,
        })
    }

    pub fn trace_psi_inv(&self) -> f64 {
        self.psi_chol.inverse().trace()
    }

    pub fn trace_sigma_inv(&self) -> f64 {
        self.sigma_chol.inverse().trace()
    }

    /// `Tr(Sigma^-1 M^T Psi^-1 M)`.
    pub fn fisher_trace(&self, m: &Mat) -> f64 {
        let a = self.psi_chol.solve(m);
        self.sigma_chol.solve(&m.t_matmul(&a)).trace()
    }
}

/// `Psi = eps1 sum U^(kT) U^k`, `Sigma = eps2 sum V^(kT) V^k`.
pub fn state_covariances(dyn_: &LinearMatrixDynamics) -> Result<(Mat, Mat)> {
    let n = dyn_.n();
    let psi = solve_discrete_lyapunov(&dyn_.u, &Mat::identity(n), DEFAULT_TOL, DEFAULT_ITER_MAX)?.scale(dyn_.eps1);
    let sigma = solve_discrete_lyapunov(&dyn_.v, &Mat::identity(n), DEFAULT_TOL, DEFAULT_ITER_MAX)?.scale(dyn_.eps2);
    Ok((psi, sigma))
}

pub fn state_covariance_factors(dyn_: &LinearMatrixDynamics) -> Result<StateCovariances> {
    let (psi, sigma) = state_covariances(dyn_)?;
    StateCovariances::from_parts(psi, sigma)
}

/// `J(i) = Tr(Sigma^-1 V^(iT) W^T U^i Psi^-1 U^(iT) W V^i)` for `i = 0..=k_max`.
pub fn fmc(dyn_: &LinearMatrixDynamics, k_max: usize) -> Result<FmcSeries> {
    let (ru, rv) = require_stable(dyn_)?;
    let cov = state_covariance_factors(dyn_)?;
    let mut values = Vec::with_capacity(k_max + 1);
    let mut m = dyn_.w.clone();
    for i in 0..=k_max {
        if i > 0 {
            m = Mat::bilinear(&dyn_.u, &m, &dyn_.v);
        }
        values.push(cov.fisher_trace(&m));
    }
    let c = fmc_bound_constant(dyn_, &cov);
    Ok(FmcSeries::from_values(values, geometric_tail(c, ru * rv, k_max)))
}

/// `Tr(Sigma^-1) Tr(Psi^-1) |W|_F^2`: `J(i) <= c (rho_U rho_V)^(2i)`.
fn fmc_bound_constant(dyn_: &LinearMatrixDynamics, cov: &StateCovariances) -> f64 {
    cov.trace_sigma_inv() * cov.trace_psi_inv() * dyn_.w.frobenius_norm_sq()
}

/// Truncation depth for which the omitted tail of the curve is below `tol`.
pub fn capacity_depth(dyn_: &LinearMatrixDynamics, tol: f64) -> Result<usize> {
    let (ru, rv) = require_stable(dyn_)?;
    let cov = state_covariance_factors(dyn_)?;
    Ok(truncation_depth(fmc_bound_constant(dyn_, &cov), ru * rv, tol))
}

/// `J_tot = sum_i J(i)`, truncated where the geometric tail bound is below `tol`.
pub fn capacity(dyn_: &LinearMatrixDynamics, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let k = capacity_depth(dyn_, tol)?;
    Ok(fmc(dyn_, k)?.capacity)
}

/// Capacity of a system with normal `U`, `V` from their spectra:
/// `(1/eps1 eps2) sum_jk (1-|mu_k|^2)(1-|lambda_j|^2)/(1-|mu_k|^2|lambda_j|^2) |b_jk|^2`
/// with `B = E_U^H W E_V`.
pub fn capacity_normal_closed_form(dyn_: &LinearMatrixDynamics) -> Result<f64> {
    let eu = eig_normal(&dyn_.u)?;
    let ev = eig_normal(&dyn_.v)?;
    let n = dyn_.n();
    let w = crate::linalg::to_complex(&dyn_.w);
    let b = eu.vectors.adjoint() * w * &ev.vectors;
    let mut total = 0.0;
    for j in 0..n {
        let lu = eu.values[j].norm_sqr();
        for k in 0..n {
            let lv = ev.values[k].norm_sqr();
            let prod = lu * lv;
            if !(prod < 1.0) {
                return Err(Error::NonConvergent {
                    residual: f64::INFINITY,
                    iterations: 0,
                    spectral_radius: prod.sqrt(),
                });
            }
            total += (1.0 - lv) * (1.0 - lu) / (1.0 - prod) * b[(j, k)].norm_sqr();
        }
    }
    Ok(total / (dyn_.eps1 * dyn_.eps2))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CapacityBoundsReport {
    pub n: usize,
    pub j_tot: f64,
    pub input_fisher: f64,
    pub j_tot_rel: f64,
    pub normal: bool,
    /// Zero eigenvalues on both sides: the strict bound degenerates to equality.
    pub edge: bool,
    /// `J_tot_rel < 1`; `None` when the system is not normal or sits on the edge.
    pub corollary2_satisfied: Option<bool>,
    /// `J_tot_rel <= N^2`.
    pub theorem3_satisfied: bool,
}

pub fn capacity_bounds_report(dyn_: &LinearMatrixDynamics) -> Result<CapacityBoundsReport> {
    let j_tot = capacity(dyn_, DEFAULT_CAPACITY_TOL)?;
    let input_fisher = input_fisher_information(&dyn_.w, dyn_.eps1, dyn_.eps2)?;
    if input_fisher == 0.0 {
        return Err(Error::invalid("W = 0 carries no input information"));
    }
    let j_tot_rel = j_tot / input_fisher;
    let normal = dyn_.is_normal();
    let edge = normal && has_zero_eigenvalue(&dyn_.u)? && has_zero_eigenvalue(&dyn_.v)?;
    let n = dyn_.n();
    Ok(CapacityBoundsReport {
        n,
        j_tot,
        input_fisher,
        j_tot_rel,
        normal,
        edge,
        corollary2_satisfied: (normal && !edge).then_some(j_tot_rel < 1.0),
        theorem3_satisfied: j_tot_rel <= (n * n) as f64,
    })
}

fn has_zero_eigenvalue(a: &Mat) -> Result<bool> {
    let scale = a.max_abs().max(1.0);
    Ok(eig_normal(a)?.values.iter().any(|l| l.norm() <= 1e-12 * scale))
}

/// `E[Tr X^T X]` in steady state for a unit-variance input:
/// `sum_k |U^(kT) W V^k|_F^2 + eps1 eps2 sum_k Tr(V^(kT) V^k) Tr(U^(kT) U^k)`.
pub fn expected_state_norm(dyn_: &LinearMatrixDynamics, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let (ru, rv) = require_stable(dyn_)?;
    let n = dyn_.n() as f64;
    let c = dyn_.w.frobenius_norm_sq() + dyn_.eps1 * dyn_.eps2 * n * n;
    let k_max = truncation_depth(c, ru * rv, tol);
    let mut m = dyn_.w.clone();
    let mut uk = Mat::identity(dyn_.n());
    let mut vk = Mat::identity(dyn_.n());
    let mut total = 0.0;
    for k in 0..=k_max {
        if k > 0 {
            m = Mat::bilinear(&dyn_.u, &m, &dyn_.v);
            uk = uk.matmul(&dyn_.u);
            vk = vk.matmul(&dyn_.v);
        }
        total += m.frobenius_norm_sq() + dyn_.eps1 * dyn_.eps2 * uk.frobenius_norm_sq() * vk.frobenius_norm_sq();
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DynamicRangeReport {
    pub j_tot: f64,
    pub trace_sigma_inv: f64,
    pub trace_psi_inv: f64,
    pub expected_state_norm: f64,
    /// `Tr(Sigma^-1) Tr(Psi^-1) E[Tr X^T X]`.
    pub bound: f64,
    pub satisfied: bool,
}

pub fn dynamic_range_bound_check(dyn_: &LinearMatrixDynamics) -> Result<DynamicRangeReport> {
    let j_tot = capacity(dyn_, DEFAULT_CAPACITY_TOL)?;
    let cov = state_covariance_factors(dyn_)?;
    let trace_sigma_inv = cov.trace_sigma_inv();
    let trace_psi_inv = cov.trace_psi_inv();
    let expected = expected_state_norm(dyn_, DEFAULT_CAPACITY_TOL)?;
    let bound = trace_sigma_inv * trace_psi_inv * expected;
    Ok(DynamicRangeReport {
        j_tot,
        trace_sigma_inv,
        trace_psi_inv,
        expected_state_norm: expected,
        bound,
        satisfied: j_tot <= bound,
    })
}

fn mat_pow(a: &Mat, k: usize) -> Mat {
    let mut out = Mat::identity(a.rows());
    for _ in 0..k {
        out = out.matmul(a);
    }
    out
}

/// `(V^j Sigma^-1 V^(iT), U^i Psi^-1 U^(jT))`.
pub fn spatiotemporal_fmm(dyn_: &LinearMatrixDynamics, i: usize, j: usize) -> Result<(Mat, Mat)> {
    require_stable(dyn_)?;
    let cov = state_covariance_factors(dyn_)?;
    Ok(spatiotemporal_with(dyn_, &cov, i, j))
}

pub fn spatiotemporal_with(dyn_: &LinearMatrixDynamics, cov: &StateCovariances, i: usize, j: usize) -> (Mat, Mat) {
    let (vi, vj) = (mat_pow(&dyn_.v, i), mat_pow(&dyn_.v, j));
    let (ui, uj) = (mat_pow(&dyn_.u, i), mat_pow(&dyn_.u, j));
    let jst_v = vj.matmul(&cov.sigma_chol.solve(&vi.transpose()));
    let jst_u = ui.matmul(&cov.psi_chol.solve(&uj.transpose()));
    (jst_v, jst_u)
}

/// Vector network `x(n) = W x(n-1) + v s(n) + z(n)`, `z ~ N(0, eps I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorDynamics {
    pub w_rec: Mat,
    pub v: Vec<f64>,
    pub eps: f64,
}

impl VectorDynamics {
    pub fn new(w_rec: Mat, v: Vec<f64>, eps: f64) -> Result<Self> {
        if !w_rec.is_square() {
            return Err(Error::NotSquare {
                op: "vector dynamics",
                rows: w_rec.rows(),
                cols: w_rec.cols(),
            });
        }
        if v.len() != w_rec.rows() {
            return Err(Error::invalid(format!("v has length {}, expected {}", v.len(), w_rec.rows())));
        }
        if !(eps > 0.0) {
            return Err(Error::invalid("noise scale must be positive"));
        }
        Ok(VectorDynamics { w_rec, v, eps })
    }

    /// Normal convergent `W`, unit-norm Gaussian `v`, unit noise.
    pub fn random_normal(n: usize, radius_max: f64, rng: &mut SeededRng) -> Self {
        let w_rec = random_normal_convergent(n, radius_max, rng);
        let v = unit_frobenius(random_gaussian(n, 1, rng)).into_vec();
        Self::new(w_rec, v, 1.0).expect("valid random vector system")
    }
}

/// `J(i) = v^T W^(iT) C^-1 W^i v` with `C = eps sum_k W^k W^(kT)`.
pub fn vector_fmc(dyn_: &VectorDynamics, k_max: usize) -> Result<FmcSeries> {
    let n = dyn_.w_rec.rows();
    let r = spectral_radius(&dyn_.w_rec);
    if !(r < 1.0) {
        return Err(Error::NonConvergent {
            residual: f64::INFINITY,
            iterations: 0,
            spectral_radius: r,
        });
    }
    let c = solve_discrete_lyapunov(&dyn_.w_rec.transpose(), &Mat::identity(n), DEFAULT_TOL, DEFAULT_ITER_MAX)?
        .scale(dyn_.eps);
    let chol = Cholesky::new(&c).map_err(|_| Error::SingularCovariance("vector state covariance"))?;
    let mut x = Mat::from_vec(n, 1, dyn_.v.clone())?;
    let mut values = Vec::with_capacity(k_max + 1);
    for i in 0..=k_max {
        if i > 0 {
            x = dyn_.w_rec.matmul(&x);
        }
        values.push(x.t_matmul(&chol.solve(&x))[(0, 0)]);
    }
    let v2: f64 = dyn_.v.iter().map(|x| x * x).sum();
    let bound_c = v2 * chol.inverse().trace();
    Ok(FmcSeries::from_values(values, geometric_tail(bound_c, r, k_max)))
}

/// Forward simulation from `X(0) = 0`; `signal[t]` drives step `t + 1`.
pub fn simulate(dyn_: &LinearMatrixDynamics, signal: &[f64], rng: &mut SeededRng, noise_on: bool) -> Vec<Mat> {
    let n = dyn_.n();
    let scale = (dyn_.eps1 * dyn_.eps2).sqrt();
    let mut x = Mat::zeros(n, n);
    let mut out = Vec::with_capacity(signal.len());
    for s in signal {
        let z = noise_on.then(|| Mat::from_fn(n, n, |_, _| scale * rng.normal()));
        x = dyn_.step(&x, *s, z.as_ref());
        out.push(x.clone());
    }
    out
}
