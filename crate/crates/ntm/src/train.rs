//! Seeded training loop and evaluation sweeps.

use matcap_core::rng::RngState;
use matcap_core::{par, Mat, SeededRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AdError;
use crate::model::{bit_error, Model, ModelConfig, ModelKind};
use crate::optim::{clip_global_norm, RmsProp};
use crate::tasks::{copy_of_len, generate, recall_of_size, TaskKind, TaskParams, TaskSample};

const DATA_STREAM: u64 = 0xDA7A;
const EVAL_STREAM: u64 = 0xE7A1;

/// Seeds used for the five-run averages.
pub const REFERENCE_SEEDS: [u64; 5] = [11, 22, 33, 44, 55];

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("loss became non-finite ({loss}) at iteration {iteration}")]
    Diverged { iteration: usize, loss: f64 },
    #[error(transparent)]
    Shape(#[from] AdError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: TaskKind,
    pub model: ModelConfig,
    pub task_params: TaskParams,
    pub batch_size: usize,
    pub lr: f64,
    pub max_iterations: usize,
    pub clip_norm: f64,
    pub seed: u64,
    /// Iterations between checkpoints; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
}

impl TrainConfig {
    pub fn new(task: TaskKind, kind: ModelKind, seed: u64) -> Self {
        let (model, lr) = match task {
            TaskKind::Copy => (ModelConfig::copy(kind), 1e-4),
            TaskKind::Recall => (ModelConfig::recall(kind), 8e-5),
        };
        TrainConfig {
            task,
            model,
            task_params: TaskParams::default(),
            batch_size: 16,
            lr,
            max_iterations: 100_000,
            clip_norm: 10.0,
            seed,
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.model.validate()?;
        if self.task_params.n != self.model.content {
            return Err(format!(
                "task content size {} differs from model content size {}",
                self.task_params.n, self.model.content
            ));
        }
        let tp = &self.task_params;
        if tp.len_min == 0 || tp.len_min > tp.len_max {
            return Err(format!("bad copy length range {}..={}", tp.len_min, tp.len_max));
        }
        if tp.items_min < 2 || tp.items_min > tp.items_max || tp.item_len == 0 {
            return Err("recall needs items_min >= 2, items_min <= items_max, item_len >= 1".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.clip_norm > 0.0) {
            return Err(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        Ok(())
    }
}

/// Published parameter counts of the reference models.
pub fn reference_param_count(task: TaskKind, kind: ModelKind) -> usize {
    match (task, kind) {
        (TaskKind::Copy, ModelKind::MatNtm) => 4121,
        (TaskKind::Copy, ModelKind::MatRnn) => 2175,
        (TaskKind::Recall, ModelKind::MatNtm) => 7946,
        (TaskKind::Recall, ModelKind::MatRnn) => 5675,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LearningRecord {
    pub iteration: usize,
    pub sequences: usize,
    pub bce: f64,
    pub bit_error: f64,
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    pub optimizer: RmsProp,
    pub rng: SeededRng,
    pub iteration: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Self {
        let model = Model::new(config.model.clone(), config.seed);
        let optimizer = RmsProp::for_params(model.params());
        let rng = SeededRng::with_stream(config.seed, DATA_STREAM);
        Trainer {
            config,
            model,
            optimizer,
            rng,
            iteration: 0,
        }
    }

    /// Resumes from saved parts.
    pub fn from_parts(config: TrainConfig, model: Model, optimizer: RmsProp, rng: RngState, iteration: usize) -> matcap_core::Result<Self> {
        Ok(Trainer {
            config,
            model,
            optimizer,
            rng: SeededRng::from_state(&rng)?,
            iteration,
        })
    }

    pub fn sequences(&self) -> usize {
        self.iteration * self.config.batch_size
    }

    /// One batch: per-sample passes run in parallel, gradients are summed in
    /// sample order, averaged, clipped, then applied.
    pub fn step(&mut self) -> Result<LearningRecord, TrainError> {
        let batch: Vec<TaskSample> = (0..self.config.batch_size)
            .map(|_| generate(self.config.task, &self.config.task_params, &mut self.rng))
            .collect();
        let model = &self.model;
        let results = par::map_indexed(batch.len(), |i| {
            let s = &batch[i];
            model
                .loss_and_grads(&s.inputs, &s.targets)
                .map(|(loss, probs, grads)| (loss, bit_error(&probs, &s.targets), grads))
        });
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let mut err = 0.0;
        let mut grads: Option<Vec<Mat>> = None;
        for r in results {
            let (l, e, g) = r?;
            loss += l;
            err += e;
            match &mut grads {
                None => grads = Some(g),
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| a.add_assign(b)),
            }
        }
        let (loss, err) = (loss / n, err / n);
        let mut grads = grads.expect("non-empty batch");
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::Diverged {
                iteration: self.iteration,
                loss,
            });
        }
        for g in &mut grads {
            g.scale_in_place(1.0 / n);
        }
        clip_global_norm(&mut grads, self.config.clip_norm);
        self.optimizer.step(self.model.params_mut(), &grads, self.config.lr);
        let rec = LearningRecord {
            iteration: self.iteration,
            sequences: (self.iteration + 1) * self.config.batch_size,
            bce: loss,
            bit_error: err,
        };
        self.iteration += 1;
        Ok(rec)
    }

    /// Runs until `max_iterations`, calling `hook` after every step.
    pub fn run(&mut self, mut hook: impl FnMut(&Trainer, &LearningRecord)) -> Result<(), TrainError> {
        while self.iteration < self.config.max_iterations {
            let rec = self.step()?;
            hook(self, &rec);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRow {
    pub sweep_value: usize,
    pub mean_bce: f64,
    pub bit_error: f64,
}

fn eval_samples(model: &Model, samples: &[TaskSample]) -> Result<(f64, f64), AdError> {
    let res = par::try_map_indexed(samples.len(), |i| {
        let s = &samples[i];
        let (outs, _) = model.forward_sequence(&s.inputs, s.targets.len())?;
        let bce = crate::autodiff::bce_value(&stack(&outs), &stack(&s.targets));
        Ok((bce, bit_error(&outs, &s.targets)))
    })?;
    let n = res.len().max(1) as f64;
    Ok((
        res.iter().map(|r| r.0).sum::<f64>() / n,
        res.iter().map(|r| r.1).sum::<f64>() / n,
    ))
}

/// Vertical concatenation, so the mean is taken over all bits at once.
fn stack(ms: &[Mat]) -> Mat {
    if ms.is_empty() {
        return Mat::zeros(0, 0);
    }
    let cols = ms[0].cols();
    let data: Vec<f64> = ms.iter().flat_map(|m| m.data().iter().copied()).collect();
    Mat::from_vec(data.len() / cols, cols, data).expect("equal widths")
}

/// Mean BCE and bit error over `samples` fresh sequences per sweep value:
/// sequence length for copy, item length for recall.
pub fn evaluate_generalization(
    model: &Model,
    task: TaskKind,
    params: &TaskParams,
    sweep: &[usize],
    samples: usize,
    seed: u64,
) -> Result<Vec<EvalRow>, AdError> {
    sweep
        .iter()
        .map(|&v| {
            let mut rng = SeededRng::with_stream(seed, EVAL_STREAM + v as u64);
            let batch: Vec<TaskSample> = (0..samples)
                .map(|_| match task {
                    TaskKind::Copy => copy_of_len(params.n, v, &mut rng),
                    TaskKind::Recall => {
                        let items = rng.int_inclusive(params.items_min, params.items_max);
                        recall_of_size(params.n, v, items, &mut rng)
                    }
                })
                .collect();
            let (mean_bce, bit_error) = eval_samples(model, &batch)?;
            Ok(EvalRow {
                sweep_value: v,
                mean_bce,
                bit_error,
            })
        })
        .collect()
}

/// Mean BCE and bit error on fresh sequences drawn from `params`.
pub fn evaluate_random(
    model: &Model,
    task: TaskKind,
    params: &TaskParams,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64), AdError> {
    let mut rng = SeededRng::with_stream(seed, EVAL_STREAM);
    let batch: Vec<TaskSample> = (0..samples).map(|_| generate(task, params, &mut rng)).collect();
    eval_samples(model, &batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kind: ModelKind) -> TrainConfig {
        let mut c = TrainConfig::new(TaskKind::Copy, kind, 3);
        c.model = ModelConfig::tiny(kind);
        c.task_params.n = 2;
        c.task_params.len_max = 4;
        c.batch_size = 4;
        c.max_iterations = 50;
        c.lr = 1e-3;
        c
    }

    #[test]
    fn smoke_run_is_finite() {
        let mut t = Trainer::new(tiny(ModelKind::MatNtm));
        let mut recs = Vec::new();
        t.run(|_, r| recs.push(r.clone())).unwrap();
        assert_eq!(recs.len(), 50);
        assert!(recs.iter().all(|r| r.bce.is_finite() && (0.0..=1.0).contains(&r.bit_error)));
        assert_eq!(recs[49].sequences, 200);
    }

    #[test]
    fn first_loss_near_chance() {
        for kind in [ModelKind::MatNtm, ModelKind::MatRnn] {
            let mut t = Trainer::new(TrainConfig::new(TaskKind::Copy, kind, 11));
            let r = t.step().unwrap();
            assert!((r.bce - std::f64::consts::LN_2).abs() < 0.05, "{kind}: {}", r.bce);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut t = Trainer::new(tiny(ModelKind::MatNtm));
            let mut out = Vec::new();
            for _ in 0..5 {
                out.push(t.step().unwrap().bce.to_bits());
            }
            out
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn eval_costs_nonnegative_and_deterministic() {
        let c = tiny(ModelKind::MatNtm);
        let m = Model::new(c.model.clone(), 1);
        let a = evaluate_generalization(&m, TaskKind::Copy, &c.task_params, &[1, 3, 6], 10, 4).unwrap();
        let b = evaluate_generalization(&m, TaskKind::Copy, &c.task_params, &[1, 3, 6], 10, 4).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.mean_bce >= 0.0));
    }

    #[test]
    fn bad_config_rejected() {
        let mut c = tiny(ModelKind::MatNtm);
        c.task_params.n = 5;
        assert!(c.validate().is_err());
        let mut c = tiny(ModelKind::MatNtm);
        c.lr = 0.0;
        assert!(c.validate().is_err());
    }
}
