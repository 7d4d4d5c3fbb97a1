//! Subcommand bodies.

use std::path::{Path, PathBuf};

use matcap_core::sweep::{capacity_sweep as run_sweep, fmc_trials, mem_fmc_trials, SystemKind};
use matcap_core::Mat;
use matcap_ntm::checkpoint::Checkpoint;
use matcap_ntm::gradcheck::{GradCheckReport, GradCheckSetup};
use matcap_ntm::model::Diagnostics;
use matcap_ntm::tasks::{copy_of_len, recall_of_size, TaskParams};
use matcap_ntm::train::{
    evaluate_generalization, evaluate_random, reference_param_count, EvalRow, LearningRecord, TrainError,
};
use matcap_ntm::{Model, ModelConfig, ModelKind, TaskKind, TrainConfig, Trainer};
use matcap_core::SeededRng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::*;
use crate::svg::{Plot, Series};
use crate::{CliError, EvalArgs, FmcArgs, GradcheckArgs, MemArgs, SweepArgs, TrainArgs};

fn check_radius(radius: f64) -> Result<(), CliError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(CliError::Config(format!("radius must be positive, got {radius}")));
    }
    if radius >= 1.0 {
        return Err(CliError::NonConvergent(format!(
            "spectral radius {radius} >= 1: the memory series does not converge"
        )));
    }
    Ok(())
}

/// Mean over trials of the per-lag series selected by `f`.
fn mean_series<T>(trials: &[T], f: impl Fn(&T) -> &[f64]) -> Vec<(f64, f64)> {
    let len = trials.iter().map(|t| f(t).len()).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let m = trials.iter().map(|t| f(t)[i]).sum::<f64>() / trials.len() as f64;
            (i as f64, m)
        })
        .collect()
}

pub fn fmc(a: &FmcArgs) -> Result<(), CliError> {
    if a.n == 0 {
        return Err(CliError::Config("n must be >= 1".into()));
    }
    check_radius(a.radius)?;
    let trials = fmc_trials(a.n, a.trials, a.radius, a.seed, a.kmax)?;

    let mut mat = CsvOut::create(&a.out.join("fmc.csv"), &FMC_HEADER)?;
    let mut vec = CsvOut::create(&a.out.join("fmc_vector.csv"), &FMC_HEADER)?;
    for t in &trials {
        for (i, (j, c)) in t.matrix.values.iter().zip(&t.matrix.cumulative).enumerate() {
            mat.row([t.trial.to_string(), i.to_string(), num(*j), num(*c)])?;
        }
        for (i, (j, c)) in t.vector.values.iter().zip(&t.vector.cumulative).enumerate() {
            vec.row([t.trial.to_string(), i.to_string(), num(*j), num(*c)])?;
        }
    }
    mat.finish()?;
    vec.finish()?;

    if !trials.is_empty() {
        let plot = Plot {
            title: format!("Fisher memory curve, N = {}, {} trials", a.n, trials.len()),
            x_label: "lag i".into(),
            y_label: "J(i), cumulative".into(),
            log_y: false,
            series: vec![
                Series::new("matrix J(i)", mean_series(&trials, |t| &t.matrix.values)),
                Series::new("matrix cumulative", mean_series(&trials, |t| &t.matrix.cumulative)),
                Series::new("vector J(i)", mean_series(&trials, |t| &t.vector.values)).dashed(),
                Series::new("vector cumulative", mean_series(&trials, |t| &t.vector.cumulative)).dashed(),
            ],
        };
        write_text(&a.out.join("fmc.svg"), &plot.render())?;
    }
    Ok(())
}

pub fn capacity_sweep(a: &SweepArgs) -> Result<(), CliError> {
    if a.n_list.contains(&0) {
        return Err(CliError::Config("sizes must be >= 1".into()));
    }
    check_radius(a.radius)?;
    let kind = if a.general { SystemKind::General } else { SystemKind::Normal };
    let rows = run_sweep(&a.n_list, a.trials, kind, a.radius, a.seed)?;
    let mut w = CsvOut::create(&a.out.join("capacity_sweep.csv"), &SWEEP_HEADER)?;
    for r in &rows {
        w.row([
            r.n.to_string(),
            r.trial.to_string(),
            num(r.j_tot),
            num(r.j_tot_rel),
            num(r.bound),
            r.satisfied.to_string(),
        ])?;
    }
    w.finish()
}

pub fn mem_fmc(a: &MemArgs) -> Result<(), CliError> {
    if a.n == 0 {
        return Err(CliError::Config("n must be >= 1".into()));
    }
    if a.m_max == 0 {
        return Err(CliError::Config("m_max must be >= 1".into()));
    }
    check_radius(a.radius)?;
    let trials = mem_fmc_trials(a.n, a.trials, a.m_max, a.kmax, a.radius, a.seed)?;
    let mut w = CsvOut::create(&a.out.join("mem_fmc.csv"), &MEM_HEADER)?;
    for t in &trials {
        let ratio = t.ratio();
        for (k, (j, c)) in t.memory.values.iter().zip(&t.memory.cumulative).enumerate() {
            w.row([
                t.trial.to_string(),
                k.to_string(),
                num(*j),
                num(*c),
                num(t.base.capacity),
                num(ratio),
            ])?;
        }
    }
    w.finish()?;

    if !trials.is_empty() {
        let plot = Plot {
            title: format!("Memory-augmented FMC, N = {}, m_max = {}", a.n, a.m_max),
            x_label: "lag k".into(),
            y_label: "cumulative J".into(),
            log_y: false,
            series: vec![
                Series::new("with memory", mean_series(&trials, |t| &t.memory.cumulative)),
                Series::new("without memory", mean_series(&trials, |t| &t.base.cumulative)).dashed(),
            ],
        };
        write_text(&a.out.join("mem_fmc.svg"), &plot.render())?;
    }
    Ok(())
}

/// Builds the training config: file keys first, then flags on top.
pub fn train_config(a: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let file_task: Option<TaskKind> = cfg.take("task")?;
    let file_model: Option<ModelKind> = cfg.take("model")?;
    let file_seed: Option<u64> = cfg.take("seed")?;
    let task = match &a.task {
        Some(s) => s.parse().map_err(CliError::Config)?,
        None => file_task.unwrap_or(TaskKind::Copy),
    };
    let kind = match &a.model {
        Some(s) => s.parse().map_err(CliError::Config)?,
        None => file_model.unwrap_or(ModelKind::MatNtm),
    };
    let seed = a.seed.or(file_seed).unwrap_or(11);
    let mut c = TrainConfig::new(task, kind, seed);

    if let Some(size) = cfg.take::<String>("size")? {
        c.model = match size.as_str() {
            "tiny" => ModelConfig::tiny(kind),
            "copy" => ModelConfig::copy(kind),
            "recall" => ModelConfig::recall(kind),
            other => return Err(CliError::Config(format!("unknown size preset {other:?}"))),
        };
        c.task_params.n = c.model.content;
    }
    if let Some(n) = cfg.take("content")? {
        c.model.content = n;
        c.task_params.n = n;
    }
    c.model.layers = cfg.take_or("layers", c.model.layers)?;
    if let Some(h) = cfg.take::<String>("hidden")? {
        let parts: Vec<&str> = h.split('x').collect();
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| CliError::Config(format!("hidden {h:?}: {e}")))
        };
        c.model.hidden = match parts.as_slice() {
            [a] => [parse(a)?; 2],
            [a, b] => [parse(a)?, parse(b)?],
            _ => return Err(CliError::Config(format!("hidden must be R or RxC, got {h:?}"))),
        };
    }
    c.model.slots = cfg.take_or("slots", c.model.slots)?;
    c.model.slot_dim = cfg.take_or("slot_dim", c.model.slot_dim)?;
    c.batch_size = cfg.take_or("batch_size", c.batch_size)?;
    c.lr = cfg.take_or("lr", c.lr)?;
    c.max_iterations = cfg.take_or("iterations", c.max_iterations)?;
    c.clip_norm = cfg.take_or("clip_norm", c.clip_norm)?;
    c.checkpoint_every = cfg.take_or("checkpoint_every", c.checkpoint_every)?;
    let tp = &mut c.task_params;
    tp.len_min = cfg.take_or("len_min", tp.len_min)?;
    tp.len_max = cfg.take_or("len_max", tp.len_max)?;
    tp.item_len = cfg.take_or("item_len", tp.item_len)?;
    tp.items_min = cfg.take_or("items_min", tp.items_min)?;
    tp.items_max = cfg.take_or("items_max", tp.items_max)?;
    cfg.finish()?;

    if let Some(it) = a.iterations {
        c.max_iterations = it;
    }
    c.validate().map_err(CliError::Config)?;
    Ok(c)
}

#[derive(Debug, Serialize)]
struct HeldOut {
    description: String,
    samples: usize,
    mean_bce: f64,
    bit_error: f64,
}

#[derive(Debug, Serialize)]
struct FinalReport {
    task: TaskKind,
    model: ModelKind,
    seed: u64,
    param_count: usize,
    reference_param_count: usize,
    param_breakdown: Vec<(String, usize)>,
    iterations: usize,
    sequences: usize,
    diverged: bool,
    /// Mean over the last 100 training batches.
    final_bce: f64,
    final_bit_error: f64,
    /// Lowest 100-batch moving average of the training bit error.
    best_bit_error: f64,
    held_out: Vec<HeldOut>,
}

const EVAL_SAMPLES: usize = 100;
const WINDOW: usize = 100;

fn tail_mean(recs: &[LearningRecord], f: impl Fn(&LearningRecord) -> f64) -> f64 {
    let tail = &recs[recs.len().saturating_sub(WINDOW)..];
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.iter().map(&f).sum::<f64>() / tail.len() as f64
}

fn best_window(recs: &[LearningRecord]) -> f64 {
    if recs.is_empty() {
        return f64::NAN;
    }
    let w = WINDOW.min(recs.len());
    let mut sum: f64 = recs[..w].iter().map(|r| r.bit_error).sum();
    let mut best = sum;
    for i in w..recs.len() {
        sum += recs[i].bit_error - recs[i - w].bit_error;
        best = best.min(sum);
    }
    best / w as f64
}

/// Held-out evaluation used by the final report and the acceptance suite.
pub fn held_out_eval(model: &Model, c: &TrainConfig, seed: u64) -> Result<Vec<(String, f64, f64)>, CliError> {
    Ok(match c.task {
        TaskKind::Copy => {
            let mut short = c.task_params.clone();
            short.len_min = 1;
            short.len_max = 10;
            let (b, e) = evaluate_random(model, TaskKind::Copy, &short, EVAL_SAMPLES, seed)?;
            let l10 = evaluate_generalization(model, TaskKind::Copy, &c.task_params, &[10], EVAL_SAMPLES, seed)?;
            vec![
                ("copy, length 1..=10".to_string(), b, e),
                ("copy, length 10".to_string(), l10[0].mean_bce, l10[0].bit_error),
            ]
        }
        TaskKind::Recall => {
            let (b, e) = evaluate_random(model, TaskKind::Recall, &c.task_params, EVAL_SAMPLES, seed)?;
            vec![("recall, training distribution".to_string(), b, e)]
        }
    })
}

fn write_diagnostics(path: &Path, model: &Model, c: &TrainConfig) -> Result<(), CliError> {
    let mut rng = SeededRng::with_stream(c.seed, 0xD1A6);
    let sample = match c.task {
        TaskKind::Copy => copy_of_len(c.task_params.n, 10.min(c.task_params.len_max), &mut rng),
        TaskKind::Recall => recall_of_size(c.task_params.n, c.task_params.item_len, c.task_params.items_min, &mut rng),
    };
    let (_, diag): (Vec<Mat>, Diagnostics) = model.forward_sequence(&sample.inputs, sample.targets.len())?;
    let mut w = CsvOut::create(path, &DIAG_HEADER)?;
    let n_in = sample.inputs.len();
    for (head, weights) in [("read", &diag.read_weights), ("write", &diag.write_weights)] {
        for (step, ws) in weights.iter().enumerate() {
            let phase = if step < n_in { "input" } else { "output" };
            for (slot, v) in ws.iter().enumerate() {
                w.row([step.to_string(), phase.to_string(), head.to_string(), slot.to_string(), num(*v)])?;
            }
        }
    }
    w.finish()
}

fn save_checkpoint(path: &Path, t: &Trainer) -> Result<(), CliError> {
    Checkpoint::from_trainer(t).save(path)?;
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let mut trainer = match &a.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.train_config.is_none() {
                return Err(CliError::Config(format!("{} holds no training state", path.display())));
            }
            let mut t = ck.trainer()?;
            if let Some(it) = a.iterations {
                t.config.max_iterations = it;
            }
            t
        }
        None => Trainer::new(train_config(a)?),
    };
    let c = trainer.config.clone();
    std::fs::create_dir_all(&a.out)?;
    let cfg_json = serde_json::to_string_pretty(&c).map_err(|e| CliError::Io(e.to_string()))?;
    write_text(&a.out.join("train_config.json"), &(cfg_json + "\n"))?;

    let mut curve = CsvOut::create(&a.out.join("learning_curve.csv"), &CURVE_HEADER)?;
    let mut recs: Vec<LearningRecord> = Vec::new();
    let mut hook_err: Option<CliError> = None;
    let every = c.checkpoint_every;
    let result = trainer.run(|t, r| {
        if hook_err.is_some() {
            return;
        }
        let row = [r.iteration.to_string(), r.sequences.to_string(), num(r.bce), num(r.bit_error)];
        if let Err(e) = curve.row(row) {
            hook_err = Some(e);
        }
        recs.push(r.clone());
        if every > 0 && r.iteration % every == 0 {
            let p = a.out.join(format!("checkpoint_{:08}.json", r.iteration));
            if let Err(e) = save_checkpoint(&p, t) {
                hook_err = Some(e);
            }
        }
        if !a.quiet && r.iteration % 100 == 0 {
            eprintln!(
                "iter {:>7} seq {:>8} bce {:.5} bit_err {:.4}",
                r.iteration,
                r.sequences,
                tail_mean(&recs, |x| x.bce),
                tail_mean(&recs, |x| x.bit_error)
            );
        }
    });
    curve.finish()?;
    if let Some(e) = hook_err {
        return Err(e);
    }
    save_checkpoint(&a.out.join("checkpoint.json"), &trainer)?;

    let diverged = match result {
        Ok(()) => None,
        Err(TrainError::Diverged { iteration, loss }) => Some(format!("loss {loss} at iteration {iteration}")),
        Err(TrainError::Shape(e)) => return Err(e.into()),
    };

    let model = &trainer.model;
    let held_out = if diverged.is_none() {
        write_diagnostics(&a.out.join("diagnostics.csv"), model, &c)?;
        held_out_eval(model, &c, c.seed)?
            .into_iter()
            .map(|(description, mean_bce, bit_error)| HeldOut {
                description,
                samples: EVAL_SAMPLES,
                mean_bce,
                bit_error,
            })
            .collect()
    } else {
        Vec::new()
    };
    let report = FinalReport {
        task: c.task,
        model: c.model.kind,
        seed: c.seed,
        param_count: model.param_count(),
        reference_param_count: reference_param_count(c.task, c.model.kind),
        param_breakdown: model.param_breakdown(),
        iterations: trainer.iteration,
        sequences: trainer.sequences(),
        diverged: diverged.is_some(),
        final_bce: tail_mean(&recs, |r| r.bce),
        final_bit_error: tail_mean(&recs, |r| r.bit_error),
        best_bit_error: best_window(&recs),
        held_out,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    write_text(&a.out.join("final_report.json"), &(json + "\n"))?;

    match diverged {
        Some(msg) => Err(CliError::NonConvergent(format!("training diverged: {msg}"))),
        None => Ok(()),
    }
}

/// Parses `l=1..40`, `n=2,4,6` or a bare range/list. Returns the key if given.
pub fn parse_sweep(s: &str) -> Result<(Option<char>, Vec<usize>), CliError> {
    let bad = || CliError::Config(format!("bad sweep {s:?}; expected e.g. l=1..40 or n=1,2,3"));
    let (key, body) = match s.split_once('=') {
        Some((k, b)) => {
            let k = k.trim();
            let mut chars = k.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => (Some(c.to_ascii_lowercase()), b.trim()),
                _ => return Err(bad()),
            }
        }
        None => (None, s.trim()),
    };
    let values: Vec<usize> = if let Some((lo, hi)) = body.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        body.split(',')
            .map(|v| v.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if values.is_empty() || values.contains(&0) {
        return Err(bad());
    }
    Ok((key, values))
}

pub fn eval_checkpoint(
    ckpt: &Checkpoint,
    sweep: &str,
    samples: usize,
    seed: u64,
) -> Result<Vec<EvalRow>, CliError> {
    let model = ckpt.model()?;
    let (key, values) = parse_sweep(sweep)?;
    let (task, params) = match &ckpt.train_config {
        Some(c) => (c.task, c.task_params.clone()),
        None => {
            let task = match key {
                Some('n') => TaskKind::Recall,
                _ => TaskKind::Copy,
            };
            let params = TaskParams {
                n: model.config().content,
                ..TaskParams::default()
            };
            (task, params)
        }
    };
    match (key, task) {
        (None, _) | (Some('l'), TaskKind::Copy) | (Some('n'), TaskKind::Recall) => {}
        (Some(k), t) => {
            return Err(CliError::Config(format!("sweep key {k:?} does not apply to the {t} task")));
        }
    }
    Ok(evaluate_generalization(&model, task, &params, &values, samples, seed)?)
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let rows = eval_checkpoint(&ckpt, &a.sweep, a.samples, a.seed)?;
    let mut w = CsvOut::create(&a.out.join("eval.csv"), &EVAL_HEADER)?;
    for r in &rows {
        w.row([r.sweep_value.to_string(), num(r.mean_bce), num(r.bit_error)])?;
    }
    w.finish()
}

pub fn gradcheck_setup(path: Option<&PathBuf>) -> Result<GradCheckSetup, CliError> {
    let mut s = GradCheckSetup::default();
    if let Some(p) = path {
        let mut cfg = RunConfig::load(p)?;
        s.kind = cfg.take_or("model", s.kind)?;
        s.model_seed = cfg.take_or("model_seed", s.model_seed)?;
        s.data_seed = cfg.take_or("data_seed", s.data_seed)?;
        s.sample_seed = cfg.take_or("sample_seed", s.sample_seed)?;
        s.coords = cfg.take_or("coords", s.coords)?;
        s.eps = cfg.take_or("eps", s.eps)?;
        s.floor = cfg.take_or("floor", s.floor)?;
        s.single_tolerance = cfg.take_or("single_tolerance", s.single_tolerance)?;
        s.unroll_tolerance = cfg.take_or("unroll_tolerance", s.unroll_tolerance)?;
        s.unroll_inputs = cfg.take_or("unroll_inputs", s.unroll_inputs)?;
        s.unroll_outputs = cfg.take_or("unroll_outputs", s.unroll_outputs)?;
        cfg.finish()?;
    }
    if !(s.eps > 0.0) || s.unroll_outputs == 0 || s.coords == 0 {
        return Err(CliError::Config("eps, coords and unroll_outputs must be positive".into()));
    }
    Ok(s)
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<(), CliError> {
    let setup = gradcheck_setup(a.config.as_ref())?;
    let reports: Vec<GradCheckReport> = setup.run()?;
    for r in &reports {
        let worst = r
            .worst
            .as_ref()
            .map(|w| format!("{}[{}] analytic {:e} numeric {:e}", w.param, w.index, w.analytic, w.numeric))
            .unwrap_or_default();
        println!(
            "{} steps={} coords={} max_rel_err={:e} tol={:e} worst: {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.steps,
            r.checked,
            r.max_rel_err,
            r.tolerance,
            worst
        );
    }
    if let Some(out) = &a.out {
        let json = serde_json::to_string_pretty(&reports).map_err(|e| CliError::Io(e.to_string()))?;
        write_text(out, &(json + "\n"))?;
    }
    if reports.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(CliError::Check("gradient check exceeded tolerance".into()))
    }
}
