use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::data::Part;
use super::eval::{evaluate, Evaluation, Policy};
use super::report::ResultRow;
use super::train::{fit, TrainOptions, TrainOutcome};
use crate::channels::{sample_rng, ChannelModel, Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::models::{Axis, ModelSpec};

/// Distribution of the swept dimension over training samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum DimDist {
    Fixed { value: usize },
    /// Uniform on `lo..=hi`.
    Uniform { lo: usize, hi: usize },
    /// `max(min, ⌈x⌉)` with `x` exponential of the given mean, redrawn while
    /// above `cap`.
    TruncExp {
        mean: f64,
        cap: usize,
        #[serde(default = "one")]
        min: usize,
    },
}

fn one() -> usize {
    1
}

impl DimDist {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match *self {
            DimDist::Fixed { value } if value == 0 => bad("fixed dimension must be positive".into()),
            DimDist::Uniform { lo, hi } if lo == 0 || lo > hi => bad(format!("uniform range {lo}..={hi}")),
            DimDist::TruncExp { mean, cap, min } if !(mean > 0.0) || min == 0 || cap < min => {
                bad(format!("truncated exponential with mean {mean}, min {min}, cap {cap}"))
            }
            _ => Ok(()),
        }
    }

    pub fn max(&self) -> usize {
        match *self {
            DimDist::Fixed { value } => value,
            DimDist::Uniform { hi, .. } => hi,
            DimDist::TruncExp { cap, .. } => cap,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            DimDist::Fixed { value } => value,
            DimDist::Uniform { lo, hi } => rng.random_range(lo..=hi),
            DimDist::TruncExp { mean, cap, min } => {
                let exp = Exp::new(1.0 / mean).expect("validated mean");
                loop {
                    let d = (exp.sample(rng).ceil() as usize).max(min);
                    if d <= cap {
                        return d;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Architecture and the fixed dimensions of the axes not swept.
    pub spec: ModelSpec,
    pub axis: Axis,
    pub train_dim: DimDist,
    pub test_dims: Vec<usize>,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default)]
    pub n_valid: usize,
    pub snr_db: f64,
    #[serde(default = "rayleigh")]
    pub channel: ChannelModel,
    #[serde(flatten)]
    pub options: TrainOptions,
}

fn rayleigh() -> ChannelModel {
    ChannelModel::Rayleigh
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<ResultRow>,
    pub evaluations: Vec<Evaluation>,
    pub training: TrainOutcome,
}

fn axis_name(a: Axis) -> &'static str {
    match a {
        Axis::Users => "users",
        Axis::Antennas => "antennas",
        Axis::RfChains => "rf_chains",
    }
}

/// Axes along which a trained model can be evaluated at other sizes.
pub fn supported_axes(spec: &ModelSpec) -> Vec<Axis> {
    let mut axes: Vec<Axis> = spec.arch.equivariant_axes().to_vec();
    for &a in spec.arch.padded_axes() {
        if !axes.contains(&a) {
            axes.push(a);
        }
    }
    axes
}

/// `(N, K, N_RF)` with the swept axis set to `d`.
fn dims(spec: &ModelSpec, axis: Axis, d: usize) -> (usize, usize, usize) {
    match axis {
        Axis::Antennas => (d, spec.k, spec.n_rf),
        Axis::Users => (spec.n, d, spec.n_rf),
        Axis::RfChains => (spec.n, spec.k, d),
    }
}

fn part(cfg: &SweepConfig, d: usize, count: usize, seed: u64) -> Result<Part> {
    let (n, k, n_rf) = dims(&cfg.spec, cfg.axis, d);
    let meta = DatasetMeta {
        channel: cfg.channel.clone(),
        seed,
        n,
        k,
        count,
        snr_db: cfg.snr_db,
        pt: 1.0,
    };
    Ok(Part {
        data: Dataset::regenerate(&meta)?,
        n_rf,
    })
}

fn check(cfg: &SweepConfig) -> Result<()> {
    cfg.train_dim.validate()?;
    let axes = supported_axes(&cfg.spec);
    if !axes.contains(&cfg.axis) {
        let names: Vec<_> = axes.iter().map(|a| axis_name(*a)).collect();
        return Err(Error::Config(format!(
            "{} cannot be swept along {}; supported axes: {}",
            cfg.spec.arch,
            axis_name(cfg.axis),
            names.join(", ")
        )));
    }
    if cfg.test_dims.is_empty() || cfg.test_dims.contains(&0) {
        return Err(Error::Config(format!("test dimensions {:?}", cfg.test_dims)));
    }
    if cfg.n_train == 0 || cfg.n_test == 0 {
        return Err(Error::Config("sweep needs training and test samples".into()));
    }
    Ok(())
}

/// The spec actually trained: padded or RF capacities raised to cover every
/// training and test size.
pub fn sweep_spec(cfg: &SweepConfig) -> ModelSpec {
    let mut spec = cfg.spec.clone();
    let top = cfg.train_dim.max().max(cfg.test_dims.iter().copied().max().unwrap_or(0));
    match cfg.axis {
        Axis::RfChains => spec.n_rf = spec.n_rf.max(top),
        a if spec.arch.padded_axes().contains(&a) => match a {
            Axis::Antennas => spec.n = spec.n.max(top),
            _ => spec.k = spec.k.max(top),
        },
        _ => {}
    }
    spec
}

/// Mixed-size training parts, one per drawn dimension.
pub fn training_parts(cfg: &SweepConfig, count: usize, stream: u64) -> Result<Vec<Part>> {
    let mut rng = sample_rng(cfg.options.seed ^ 0x5357_4545, stream);
    let mut counts = BTreeMap::new();
    for _ in 0..count {
        *counts.entry(cfg.train_dim.sample(&mut rng)).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .map(|(d, c)| part(cfg, d, c, cfg.options.seed.wrapping_mul(1000).wrapping_add(stream * 100 + d as u64)))
        .collect()
}

/// One test set per test dimension.
pub fn test_parts(cfg: &SweepConfig) -> Result<Vec<Part>> {
    cfg.test_dims
        .iter()
        .map(|&d| part(cfg, d, cfg.n_test, cfg.options.seed.wrapping_mul(1000).wrapping_add(700 + d as u64)))
        .collect()
}

/// Trains once on the mixed-size distribution and evaluates, without
/// retraining, at every test dimension.
pub fn sweep_generalize(cfg: &SweepConfig) -> Result<SweepOutcome> {
    check(cfg)?;
    let spec = sweep_spec(cfg);
    let train = training_parts(cfg, cfg.n_train, 0)?;
    let valid = if cfg.n_valid > 0 { training_parts(cfg, cfg.n_valid, 1)? } else { Vec::new() };
    let training = fit(spec, &train, &valid, &cfg.options)?;
    let mut rows = Vec::new();
    let mut evaluations = Vec::new();
    for p in test_parts(cfg)? {
        let start = Instant::now();
        let mut e = evaluate(Policy::Model(&training.model), &p.data, p.n_rf, training.n_train, &cfg.options.eval)?;
        e.row.seconds = start.elapsed().as_secs_f64();
        rows.push(e.row.clone());
        evaluations.push(e);
    }
    Ok(SweepOutcome {
        rows,
        evaluations,
        training,
    })
}
