//! Finite-difference check of the model gradient.

use matcap_core::{Mat, SeededRng};
use serde::Serialize;

use crate::autodiff::AdResult;
use crate::model::{Model, ModelConfig, ModelKind};
use crate::tasks::{content_token, random_bits};

pub const DEFAULT_EPS: f64 = 1e-4;
/// Lower bound on the denominator of the relative error.
pub const DEFAULT_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoordCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub steps: usize,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<CoordCheck>,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares backprop against central differences on `coords` parameter
/// entries drawn without replacement (all entries if there are fewer).
#[allow(clippy::too_many_arguments)]
pub fn grad_check(
    model: &Model,
    inputs: &[Mat],
    targets: &[Mat],
    coords: usize,
    eps: f64,
    floor: f64,
    tolerance: f64,
    seed: u64,
) -> AdResult<GradCheckReport> {
    let (_, _, grads) = model.loss_and_grads(inputs, targets)?;
    let specs = model.specs();
    let flat: Vec<(usize, usize)> = specs
        .iter()
        .enumerate()
        .flat_map(|(p, s)| (0..s.len()).map(move |i| (p, i)))
        .collect();

    // partial Fisher-Yates for the sample
    let mut order: Vec<usize> = (0..flat.len()).collect();
    let take = coords.min(flat.len());
    let mut rng = SeededRng::new(seed);
    for i in 0..take {
        let j = rng.int_inclusive(i, flat.len() - 1);
        order.swap(i, j);
    }
    let mut picks: Vec<usize> = order[..take].to_vec();
    picks.sort_unstable();

    let mut probe = model.clone();
    let mut max_rel = 0.0;
    let mut worst = None;
    for k in picks {
        let (p, i) = flat[k];
        let orig = model.params()[p].data()[i];
        probe.params_mut()[p].data_mut()[i] = orig + eps;
        let up = probe.loss(inputs, targets)?;
        probe.params_mut()[p].data_mut()[i] = orig - eps;
        let down = probe.loss(inputs, targets)?;
        probe.params_mut()[p].data_mut()[i] = orig;

        let numeric = (up - down) / (2.0 * eps);
        let analytic = grads[p].data()[i];
        let e = rel_err(analytic, numeric, floor);
        if e > max_rel || worst.is_none() {
            max_rel = e;
            worst = Some(CoordCheck {
                param: specs[p].name.clone(),
                index: i,
                analytic,
                numeric,
                rel_err: e,
            });
        }
    }
    Ok(GradCheckReport {
        steps: inputs.len() + targets.len(),
        checked: take,
        max_rel_err: max_rel,
        worst,
        tolerance,
        passed: max_rel <= tolerance,
    })
}

/// The two standard checks on a tiny MatNTM: one step (no input phase, one
/// output) and a four-step unroll (three inputs, one output).
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckSetup {
    pub kind: ModelKind,
    pub model_seed: u64,
    pub data_seed: u64,
    pub sample_seed: u64,
    pub coords: usize,
    pub eps: f64,
    pub floor: f64,
    pub single_tolerance: f64,
    pub unroll_tolerance: f64,
    pub unroll_inputs: usize,
    pub unroll_outputs: usize,
}

impl Default for GradCheckSetup {
    fn default() -> Self {
        GradCheckSetup {
            kind: ModelKind::MatNtm,
            model_seed: 1,
            data_seed: 2,
            sample_seed: 3,
            coords: 256,
            eps: DEFAULT_EPS,
            floor: DEFAULT_FLOOR,
            single_tolerance: 1e-5,
            unroll_tolerance: 1e-4,
            unroll_inputs: 3,
            unroll_outputs: 1,
        }
    }
}

impl GradCheckSetup {
    pub fn run(&self) -> AdResult<Vec<GradCheckReport>> {
        let config = ModelConfig::tiny(self.kind);
        let model = Model::new(config.clone(), self.model_seed);
        let mut rng = SeededRng::new(self.data_seed);
        let n = config.content;
        let mut case = |inputs: usize, outputs: usize| {
            let ins: Vec<Mat> = (0..inputs).map(|_| content_token(&random_bits(n, &mut rng))).collect();
            let tgs: Vec<Mat> = (0..outputs).map(|_| random_bits(n, &mut rng)).collect();
            (ins, tgs)
        };
        let single = case(0, 1);
        let unroll = case(self.unroll_inputs, self.unroll_outputs);
        Ok(vec![
            grad_check(
                &model,
                &single.0,
                &single.1,
                self.coords,
                self.eps,
                self.floor,
                self.single_tolerance,
                self.sample_seed,
            )?,
            grad_check(
                &model,
                &unroll.0,
                &unroll.1,
                self.coords,
                self.eps,
                self.floor,
                self.unroll_tolerance,
                self.sample_seed,
            )?,
        ])
    }
}
