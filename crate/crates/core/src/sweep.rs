//! Seeded multi-trial experiments. Trial `t` of a sweep owns
//! `SeededRng::for_trial(seed, stream)` so results do not depend on thread
//! count or scheduling.

use serde::Serialize;

use crate::error::Result;
use crate::fmc::{capacity_bounds_report, fmc, vector_fmc, FmcSeries, LinearMatrixDynamics, VectorDynamics};
use crate::linalg::Mat;
use crate::memory::{mem_fmc, MemoryAugmentedDynamics};
use crate::par;
use crate::rng::SeededRng;

pub const DEFAULT_RADIUS: f64 = 0.95;

/// Stream id for trial `t` at dimension `n`.
pub fn trial_stream(n: usize, trial: usize) -> u64 {
    ((n as u64) << 32) | trial as u64
}

pub fn trial_rng(seed: u64, n: usize, trial: usize) -> SeededRng {
    SeededRng::for_trial(seed, trial_stream(n, trial))
}

/// Scalar preset `u = v = 0.5, w = 1` and its vector twin `w_rec = 0.5, v = 1`.
pub fn scalar_preset() -> (LinearMatrixDynamics, VectorDynamics) {
    (
        LinearMatrixDynamics::scalar(0.5, 0.5, 1.0),
        VectorDynamics::new(Mat::scalar(0.5), vec![1.0], 1.0).expect("valid preset"),
    )
}

/// Matrix system of size `n` and a vector system with the same neuron count `n^2`.
/// `n = 1` gives the fixed scalar preset.
pub fn fmc_trial_systems(n: usize, radius: f64, seed: u64, trial: usize) -> (LinearMatrixDynamics, VectorDynamics) {
    if n == 1 {
        return scalar_preset();
    }
    let mut rng = trial_rng(seed, n, trial);
    let m = LinearMatrixDynamics::random_normal(n, radius, &mut rng);
    let v = VectorDynamics::random_normal(n * n, radius, &mut rng);
    (m, v)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FmcTrial {
    pub trial: usize,
    pub matrix: FmcSeries,
    pub vector: FmcSeries,
}

pub fn fmc_trials(n: usize, trials: usize, radius: f64, seed: u64, k_max: usize) -> Result<Vec<FmcTrial>> {
    par::try_map_indexed(trials, |t| {
        let (m, v) = fmc_trial_systems(n, radius, seed, t);
        Ok(FmcTrial {
            trial: t,
            matrix: fmc(&m, k_max)?,
            vector: vector_fmc(&v, k_max)?,
        })
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SystemKind {
    Normal,
    General,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub trial: usize,
    pub j_tot: f64,
    pub j_tot_rel: f64,
    /// 1 for normal systems, `N^2` otherwise.
    pub bound: f64,
    pub satisfied: bool,
}

pub fn random_system(kind: SystemKind, n: usize, radius: f64, seed: u64, trial: usize) -> LinearMatrixDynamics {
    let mut rng = trial_rng(seed, n, trial);
    match kind {
        SystemKind::Normal => LinearMatrixDynamics::random_normal(n, radius, &mut rng),
        SystemKind::General => LinearMatrixDynamics::random_general(n, radius, &mut rng),
    }
}

pub fn capacity_sweep(
    ns: &[usize],
    trials: usize,
    kind: SystemKind,
    radius: f64,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(usize, usize)> = ns.iter().flat_map(|&n| (0..trials).map(move |t| (n, t))).collect();
    par::try_map_indexed(jobs.len(), |i| {
        let (n, trial) = jobs[i];
        let system = random_system(kind, n, radius, seed, trial);
        let r = capacity_bounds_report(&system)?;
        let (bound, satisfied) = match kind {
            SystemKind::Normal => (1.0, r.j_tot_rel < 1.0),
            SystemKind::General => ((n * n) as f64, r.theorem3_satisfied),
        };
        Ok(SweepRow {
            n,
            trial,
            j_tot: r.j_tot,
            j_tot_rel: r.j_tot_rel,
            bound,
            satisfied,
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemTrial {
    pub trial: usize,
    pub base: FmcSeries,
    pub memory: FmcSeries,
}

impl MemTrial {
    pub fn ratio(&self) -> f64 {
        self.memory.capacity / self.base.capacity
    }
}

pub fn mem_fmc_trials(
    n: usize,
    trials: usize,
    m_max: usize,
    k_max: usize,
    radius: f64,
    seed: u64,
) -> Result<Vec<MemTrial>> {
    par::try_map_indexed(trials, |t| {
        let base = if n == 1 {
            scalar_preset().0
        } else {
            random_system(SystemKind::Normal, n, radius, seed, t)
        };
        Ok(MemTrial {
            trial: t,
            base: fmc(&base, k_max)?,
            memory: mem_fmc(&MemoryAugmentedDynamics::new(base, m_max, k_max))?,
        })
    })
}
