use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{load_parts, DataPart, Part};
use super::eval::{evaluate_against, reference_se, EvalOptions, Policy};
use crate::channels::sample_rng;
use crate::error::{Error, Result};
use crate::models::{save_model, Model, ModelSpec};
use crate::numkit::{AdamState, Tape};
use crate::precoding::stack_channels;

/// Optimizer and schedule settings shared by every training entry point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Defaults to the architecture's reference learning rate.
    #[serde(default)]
    pub lr: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Epochs without improvement before stopping; 0 disables early stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub max_seconds: Option<f64>,
    #[serde(default)]
    pub eval: EvalOptions,
}

fn default_batch() -> usize {
    256
}

fn default_patience() -> usize {
    20
}

impl TrainOptions {
    pub fn new(epochs: usize, seed: u64) -> Self {
        Self {
            epochs,
            batch_size: default_batch(),
            lr: None,
            seed,
            patience: default_patience(),
            max_seconds: None,
            eval: EvalOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub spec: ModelSpec,
    pub train: Vec<DataPart>,
    #[serde(default)]
    pub valid: Vec<DataPart>,
    #[serde(flatten)]
    pub options: TrainOptions,
    /// Best weights are written here; the loss curve goes to `<path>.curve.json`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean negative SE over the whole training set with the end-of-epoch weights.
    pub train_loss: f64,
    /// Mean of the per-batch losses seen while optimizing.
    pub running_loss: f64,
    /// Held-out mean SE ratio against WMMSE.
    pub valid_ratio: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    Plateau,
    TimeLimit,
    /// Non-finite loss or gradient; the last finite weights are returned.
    Diverged { epoch: usize },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights of the best epoch (held-out ratio, else training loss).
    pub model: Model<f64>,
    /// Weights after the last completed epoch.
    pub last: Model<f64>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop: StopReason,
    pub seconds: f64,
    pub n_train: usize,
}

/// Batches of one epoch: `(part, sample indices)`, samples shuffled within
/// each part, batch order shuffled across parts.
pub fn batch_plan(sizes: &[usize], batch_size: usize, seed: u64, epoch: usize) -> Vec<(usize, Vec<usize>)> {
    let mut rng = sample_rng(seed ^ 0x7261_696e, epoch as u64);
    let mut plan = Vec::new();
    for (p, &len) in sizes.iter().enumerate() {
        let mut idx: Vec<usize> = (0..len).collect();
        idx.shuffle(&mut rng);
        for chunk in idx.chunks(batch_size.max(1)) {
            plan.push((p, chunk.to_vec()));
        }
    }
    plan.shuffle(&mut rng);
    plan
}

/// Per-sample sum SE of `model` on a whole part, in batches.
fn part_se(model: &Model<f64>, part: &Part, batch: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(part.data.len());
    for chunk in part.data.samples.chunks(batch.max(1)) {
        let refs: Vec<_> = chunk.iter().collect();
        let (hr, hi) = stack_channels(&refs)?;
        let tape = Tape::new();
        let bound = model.bind(&tape, false);
        let se = model.sum_se(&bound, tape.constant(hr), tape.constant(hi), part.n_rf, chunk[0].pt, chunk[0].sigma2)?;
        out.extend_from_slice(se.value().data());
    }
    Ok(out)
}

/// Mean negative SE of `model` over every sample of `parts`.
pub fn mean_loss(model: &Model<f64>, parts: &[Part], batch: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for part in parts {
        let se = part_se(model, part, batch)?;
        total += se.iter().sum::<f64>();
        count += se.len();
    }
    Ok(-total / count.max(1) as f64)
}

fn check_parts(model: &Model<f64>, parts: &[Part], what: &str) -> Result<()> {
    for p in parts {
        let first = p
            .data
            .samples
            .first()
            .ok_or_else(|| Error::Config(format!("empty {what} dataset")))?;
        model.check_dims(first.n(), first.k(), p.n_rf)?;
    }
    Ok(())
}

/// One optimizer step on a batch; returns the batch loss.
fn step(model: &mut Model<f64>, adam: &mut AdamState<f64>, part: &Part, idx: &[usize]) -> Result<f64> {
    let refs: Vec<_> = idx.iter().map(|&i| &part.data.samples[i]).collect();
    let (hr, hi) = stack_channels(&refs)?;
    let tape = Tape::new();
    let bound = model.bind(&tape, true);
    let se = model.sum_se(&bound, tape.constant(hr), tape.constant(hi), part.n_rf, refs[0].pt, refs[0].sigma2)?;
    let loss = se.mean_all().neg();
    let value = loss.value().item();
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value}")));
    }
    let grads = tape.backward(loss)?;
    let g: Vec<_> = bound.vars().iter().map(|v| grads.wrt(*v)).collect();
    if g.iter().any(|t| t.data().iter().any(|x| !x.is_finite())) {
        return Err(Error::Numeric("gradient is not finite".into()));
    }
    let mut params = model.param_tensors();
    adam.step(&mut params, &g)?;
    model.set_param_tensors(params)?;
    Ok(value)
}

/// Unsupervised training: minimizes the mean negative SE with Adam.
pub fn fit(spec: ModelSpec, train: &[Part], valid: &[Part], opts: &TrainOptions) -> Result<TrainOutcome> {
    let start = Instant::now();
    let lr = opts.lr.unwrap_or_else(|| ModelSpec::reference_lr(spec.arch));
    if !(lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut model = Model::<f64>::new(spec, opts.seed)?;
    check_parts(&model, train, "training")?;
    check_parts(&model, valid, "validation")?;
    let n_train: usize = train.iter().map(|p| p.data.len()).sum();
    if n_train == 0 {
        return Err(Error::Config("no training samples".into()));
    }
    let references = valid
        .iter()
        .map(|p| reference_se(&p.data, &opts.eval.wmmse))
        .collect::<Result<Vec<_>>>()?;
    let valid_ratio = |m: &Model<f64>| -> Result<Option<f64>> {
        if valid.is_empty() {
            return Ok(None);
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for (p, r) in valid.iter().zip(&references) {
            let e = evaluate_against(Policy::Model(m), &p.data, p.n_rf, n_train, &opts.eval, r.clone())?;
            sum += e.ratios.iter().sum::<f64>();
            count += e.ratios.len();
        }
        Ok(Some(sum / count as f64))
    };

    let mut adam = AdamState::for_params(lr, &model.param_tensors());
    let sizes: Vec<usize> = train.iter().map(|p| p.data.len()).collect();
    let mut history = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0usize, model.clone());
    let mut stop = StopReason::Completed;
    for epoch in 1..=opts.epochs {
        let good = model.clone();
        let mut running = 0.0;
        let mut seen = 0usize;
        let mut diverged = false;
        for (p, idx) in batch_plan(&sizes, opts.batch_size, opts.seed, epoch) {
            match step(&mut model, &mut adam, &train[p], &idx) {
                Ok(l) => {
                    running += l * idx.len() as f64;
                    seen += idx.len();
                }
                Err(Error::Numeric(_)) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let train_loss = if diverged { f64::NAN } else { mean_loss(&model, train, opts.batch_size)? };
        if diverged || !train_loss.is_finite() {
            model = good;
            stop = StopReason::Diverged { epoch };
            break;
        }
        let ratio = valid_ratio(&model)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            running_loss: running / seen.max(1) as f64,
            valid_ratio: ratio,
            seconds: start.elapsed().as_secs_f64(),
        });
        let score = ratio.unwrap_or(-train_loss);
        if score > best.0 {
            best = (score, epoch, model.clone());
        }
        if opts.patience > 0 && epoch - best.1 >= opts.patience {
            stop = StopReason::Plateau;
            break;
        }
        if opts.max_seconds.is_some_and(|s| start.elapsed().as_secs_f64() >= s) {
            stop = StopReason::TimeLimit;
            break;
        }
    }
    let (_, best_epoch, best_model) = best;
    Ok(TrainOutcome {
        model: if best_epoch == 0 { model.clone() } else { best_model },
        last: model,
        history,
        best_epoch,
        stop,
        seconds: start.elapsed().as_secs_f64(),
        n_train,
    })
}

/// Loads the referenced data, trains, and writes the checkpoint and curve.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    let train = load_parts(&cfg.train, cfg.spec.n_rf)?;
    let valid = load_parts(&cfg.valid, cfg.spec.n_rf)?;
    let out = fit(cfg.spec.clone(), &train, &valid, &cfg.options)?;
    if let Some(path) = &cfg.checkpoint {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        save_model(&out.model, path)?;
        let mut curve = path.as_os_str().to_owned();
        curve.push(".curve.json");
        fs::write(PathBuf::from(curve), serde_json::to_string_pretty(&out.history)?)?;
    }
    Ok(out)
}

/// Fresh model with the same seed as `fit` would use.
pub fn initial_model(spec: ModelSpec, opts: &TrainOptions) -> Result<Model<f64>> {
    Model::new(spec, opts.seed)
}
