//! Linear matrix dynamics with a queue memory of past states:
//!
//! `X(n) = U^T X(n-1) V + W s(n) + sum_t alpha_t X(n-1-t) + Z(n)`.
//!
//! The Fisher memory curve is evaluated for a single slot (`p = 1`) from the
//! truncated mean/covariance series, with nested sums written as repeated
//! application of
//!
//! * `F(A) = sum_k U^(kT) A U^k` (row covariance, `V` analogously),
//! * `G(A) = sum_j U^(jT) A V^j` (mean derivative).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmc::{fmc, geometric_tail, truncation_depth, FmcSeries, LinearMatrixDynamics, StateCovariances};
use crate::linalg::{
    solve_discrete_lyapunov, solve_discrete_sylvester_sum, spectral_radius, Cholesky, Mat, DEFAULT_ITER_MAX,
    DEFAULT_TOL,
};
use crate::rng::SeededRng;

/// Entries beyond this magnitude abort a simulation.
pub const OVERFLOW_LIMIT: f64 = 1e12;

pub const DEFAULT_M_MAX: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryAugmentedDynamics {
    pub base: LinearMatrixDynamics,
    pub m_max: usize,
    pub k_max: usize,
}

impl MemoryAugmentedDynamics {
    pub fn new(base: LinearMatrixDynamics, m_max: usize, k_max: usize) -> Self {
        MemoryAugmentedDynamics { base, m_max, k_max }
    }

    /// Number of queue slots covered by the series; fixed at one.
    pub fn p(&self) -> usize {
        1
    }

    pub fn alpha(&self) -> &'static [f64] {
        &[1.0]
    }
}

#[derive(Clone, Debug)]
pub struct MemCovariances {
    pub psi_state: Mat,
    pub psi_mem: Mat,
    pub sigma_state: Mat,
    pub sigma_mem: Mat,
    pub m_max_used: usize,
}

impl MemCovariances {
    pub fn psi_total(&self) -> Mat {
        self.psi_state.add(&self.psi_mem)
    }

    pub fn sigma_total(&self) -> Mat {
        self.sigma_state.add(&self.sigma_mem)
    }

    /// Spectral condition numbers of the memory parts (infinite when singular).
    pub fn memory_condition_numbers(&self) -> (f64, f64) {
        (condition_number(&self.psi_mem), condition_number(&self.sigma_mem))
    }
}

fn condition_number(a: &Mat) -> f64 {
    let hi = spectral_radius(a);
    match Cholesky::new(a) {
        Ok(c) => hi * spectral_radius(&c.inverse()),
        Err(_) => f64::INFINITY,
    }
}

fn require_stable(base: &LinearMatrixDynamics) -> Result<()> {
    if base.is_stable() {
        Ok(())
    } else {
        let (ru, rv) = base.radii();
        Err(Error::NonConvergent {
            residual: f64::INFINITY,
            iterations: 0,
            spectral_radius: ru * rv,
        })
    }
}

fn lyap(a: &Mat, q: &Mat) -> Result<Mat> {
    solve_discrete_lyapunov(a, q, DEFAULT_TOL * q.max_abs().max(1.0), DEFAULT_ITER_MAX)
}

/// `(eps F(I), eps sum_{m=1..m_max} F^(m+1)(I))` for `F` built on `a`.
fn state_and_memory(a: &Mat, eps: f64, m_max: usize) -> Result<(Mat, Mat)> {
    let n = a.rows();
    let state = lyap(a, &Mat::identity(n))?;
    let mut mem = Mat::zeros(n, n);
    let mut term = state.clone();
    for _ in 0..m_max {
        term = lyap(a, &term)?;
        mem.add_assign(&term);
    }
    Ok((state.scale(eps), mem.scale(eps)))
}

pub fn mem_covariances(dyn_: &MemoryAugmentedDynamics) -> Result<MemCovariances> {
    require_stable(&dyn_.base)?;
    let b = &dyn_.base;
    let (psi_state, psi_mem) = state_and_memory(&b.u, b.eps1, dyn_.m_max)?;
    let (sigma_state, sigma_mem) = state_and_memory(&b.v, b.eps2, dyn_.m_max)?;
    Ok(MemCovariances {
        psi_state,
        psi_mem,
        sigma_state,
        sigma_mem,
        m_max_used: dyn_.m_max,
    })
}

/// `(U^(kT) W V^k, sum_{m=1..m_max} G^m(U^(kT) W V^k))`.
fn mean_derivative_parts(dyn_: &MemoryAugmentedDynamics, k: usize) -> Result<(Mat, Mat)> {
    let b = &dyn_.base;
    let mut state = b.w.clone();
    for _ in 0..k {
        state = Mat::bilinear(&b.u, &state, &b.v);
    }
    let mut mem = Mat::zeros(state.rows(), state.cols());
    let mut term = state.clone();
    for _ in 0..dyn_.m_max {
        let tol = DEFAULT_TOL * term.max_abs().max(1.0);
        term = solve_discrete_sylvester_sum(&b.u, &b.v, &term, tol, DEFAULT_ITER_MAX)?;
        mem.add_assign(&term);
    }
    Ok((state, mem))
}

/// `d M / d s_k = sum_{m=0..m_max} G^m(U^(kT) W V^k)`.
pub fn mem_mean_derivative(dyn_: &MemoryAugmentedDynamics, k: usize) -> Result<Mat> {
    require_stable(&dyn_.base)?;
    let (state, mem) = mean_derivative_parts(dyn_, k)?;
    Ok(state.add(&mem))
}

/// `J'(k) = Tr(Sigma_tot^-1 dM^T Psi_tot^-1 dM)`, `k = 0..=k_max`.
pub fn mem_fmc(dyn_: &MemoryAugmentedDynamics) -> Result<FmcSeries> {
    let covs = mem_covariances(dyn_)?;
    let total = StateCovariances::from_parts(covs.psi_total(), covs.sigma_total())?;
    let b = &dyn_.base;
    // G commutes with X -> U^T X V, so dM(k) = U^(kT) dM(0) V^k.
    let mut dm = mem_mean_derivative(dyn_, 0)?;
    let c = total.trace_sigma_inv() * total.trace_psi_inv() * dm.frobenius_norm_sq();
    let mut values = Vec::with_capacity(dyn_.k_max + 1);
    for k in 0..=dyn_.k_max {
        if k > 0 {
            dm = Mat::bilinear(&b.u, &dm, &b.v);
        }
        values.push(total.fisher_trace(&dm));
    }
    let (ru, rv) = b.radii();
    Ok(FmcSeries::from_values(values, geometric_tail(c, ru * rv, dyn_.k_max)))
}

/// `J'(k)` through the memory-fraction matrices
/// `Sigma_MF = I - Sigma_state^-1 (Sigma_mem^-1 + Sigma_state^-1)^-1` (and
/// `Psi_MF`), as the two-term trace
/// `Tr(S dM_mem^T P dM) + Tr(S dM^T P dM_state)` with
/// `S = Sigma_MF Sigma_state^-1`, `P = Psi_MF Psi_state^-1`.
pub fn mem_fmc_decomposed(dyn_: &MemoryAugmentedDynamics, k: usize) -> Result<f64> {
    if dyn_.m_max == 0 {
        return Err(Error::SingularCovariance("no memory terms with m_max = 0"));
    }
    let covs = mem_covariances(dyn_)?;
    let s = effective_precision(&covs.sigma_state, &covs.sigma_mem)?;
    let p = effective_precision(&covs.psi_state, &covs.psi_mem)?;
    let (dm_state, dm_mem) = mean_derivative_parts(dyn_, k)?;
    let dm = dm_state.add(&dm_mem);
    let first = s.matmul(&dm_mem.transpose()).matmul(&p).matmul(&dm).trace();
    let second = s.matmul(&dm.transpose()).matmul(&p).matmul(&dm_state).trace();
    Ok(first + second)
}

/// `I - A^-1 (B^-1 + A^-1)^-1`.
pub fn memory_fraction(state: &Mat, mem: &Mat) -> Result<Mat> {
    let a_inv = Cholesky::new(state)
        .map_err(|_| Error::SingularCovariance("state covariance"))?
        .inverse();
    let b_inv = Cholesky::new(mem)
        .map_err(|_| Error::SingularCovariance("memory covariance"))?
        .inverse();
    let sum = Cholesky::new(&b_inv.add(&a_inv)).map_err(|_| Error::SingularCovariance("summed precision"))?;
    let n = state.rows();
    Ok(Mat::identity(n).sub(&a_inv.matmul(&sum.inverse())))
}

/// `MF(state, mem) * state^-1`, which equals `(state + mem)^-1`.
fn effective_precision(state: &Mat, mem: &Mat) -> Result<Mat> {
    let mf = memory_fraction(state, mem)?;
    let a_inv = Cholesky::new(state)
        .map_err(|_| Error::SingularCovariance("state covariance"))?
        .inverse();
    Ok(mf.matmul(&a_inv))
}

/// Capacity with memory, truncated where the geometric tail bound is below `tol`.
pub fn mem_capacity(base: &LinearMatrixDynamics, m_max: usize, tol: f64) -> Result<f64> {
    let probe = mem_fmc(&MemoryAugmentedDynamics::new(base.clone(), m_max, 0))?;
    let (ru, rv) = base.radii();
    // bound constant of the k = 0 probe: tail(c, r, 0) * (1 - r^2) / r^2
    let r = ru * rv;
    let c = if r == 0.0 {
        0.0
    } else {
        probe.truncation_error_bound * (1.0 - r * r) / (r * r)
    };
    let k = truncation_depth(c, r, tol);
    Ok(mem_fmc(&MemoryAugmentedDynamics::new(base.clone(), m_max, k))?.capacity)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Corollary3Report {
    pub j_tot: f64,
    pub j_prime_tot: f64,
    pub ratio: f64,
    pub worst_case_bound: f64,
    pub bound_exceeded: bool,
}

pub fn corollary3_report(base: &LinearMatrixDynamics, m_max: usize, k_max: usize) -> Result<Corollary3Report> {
    let j_tot = fmc(base, k_max)?.capacity;
    let j_prime_tot = mem_fmc(&MemoryAugmentedDynamics::new(base.clone(), m_max, k_max))?.capacity;
    let ratio = j_prime_tot / j_tot;
    Ok(Corollary3Report {
        j_tot,
        j_prime_tot,
        ratio,
        worst_case_bound: 4.0 * j_tot,
        bound_exceeded: ratio > 4.0,
    })
}

/// Forward simulation of the queue dynamics from `X(n) = 0, n <= 0`.
/// `signal[n-1]` drives step `n`; missing entries are zero.
pub fn simulate_mem_dynamics(
    base: &LinearMatrixDynamics,
    p: usize,
    alpha: &[f64],
    signal: &[f64],
    steps: usize,
    rng: &mut SeededRng,
    noise_on: bool,
) -> Result<Vec<Mat>> {
    if p == 0 || alpha.len() != p {
        return Err(Error::invalid(format!("alpha has {} entries for p = {p}", alpha.len())));
    }
    if (alpha.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("alpha must sum to 1"));
    }
    if steps == 0 {
        return Err(Error::invalid("steps must be positive"));
    }
    let n = base.n();
    let scale = (base.eps1 * base.eps2).sqrt();
    // history[0] = X(n-1), history[t] = X(n-1-t)
    let mut history: std::collections::VecDeque<Mat> = (0..=p).map(|_| Mat::zeros(n, n)).collect();
    let mut out = Vec::with_capacity(steps);
    for step in 1..=steps {
        let s = signal.get(step - 1).copied().unwrap_or(0.0);
        let z = noise_on.then(|| Mat::from_fn(n, n, |_, _| scale * rng.normal()));
        let mut x = base.step(&history[0], s, z.as_ref());
        for (t, a) in alpha.iter().enumerate() {
            x.axpy(*a, &history[t + 1]);
        }
        let magnitude = x.max_abs();
        if !(magnitude <= OVERFLOW_LIMIT) {
            return Err(Error::Overflow { step, magnitude });
        }
        history.pop_back();
        history.push_front(x.clone());
        out.push(x);
    }
    Ok(out)
}
