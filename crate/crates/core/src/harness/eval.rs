use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{mean_std, ResultRow};
use crate::channels::{sample_rng, ChannelSample, Dataset};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::numkit::ComplexMatrix;
use crate::precoding::{mrt, random_phase_zf, sum_se, wmmse, zero_forcing, WmmseOptions};

/// Something that maps channels to precoders.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    Model(&'a Model<f64>),
    Wmmse(&'a WmmseOptions),
    ZeroForcing,
    Mrt,
    /// Random analog phases (seeded per sample) plus zero-forcing baseband.
    RandomPhaseZf { seed: u64 },
}

impl Policy<'_> {
    pub fn name(&self) -> String {
        match self {
            Policy::Model(m) => m.arch().id().to_string(),
            Policy::Wmmse(_) => "wmmse".into(),
            Policy::ZeroForcing => "zero_forcing".into(),
            Policy::Mrt => "mrt".into(),
            Policy::RandomPhaseZf { .. } => "random_phase_zf".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    #[serde(default)]
    pub wmmse: WmmseOptions,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Seed of the random analog phases of the hybrid floor.
    #[serde(default)]
    pub floor_seed: u64,
}

fn default_batch() -> usize {
    256
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            wmmse: WmmseOptions::default(),
            batch_size: default_batch(),
            floor_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub row: ResultRow,
    /// Per-sample SE of the policy and of the reference.
    pub se: Vec<f64>,
    pub reference_se: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Random-phase + zero-forcing SE per sample, for hybrid models when
    /// `K ≤ N_RF`.
    pub floor_se: Option<Vec<f64>>,
}

impl Evaluation {
    pub fn mean_se(&self) -> f64 {
        mean_std(&self.se).0
    }

    pub fn mean_floor_se(&self) -> Option<f64> {
        self.floor_se.as_ref().map(|f| mean_std(f).0)
    }
}

/// Fully-digital WMMSE sum SE of every sample, in parallel.
pub fn reference_se(data: &Dataset<f64>, opts: &WmmseOptions) -> Result<Vec<f64>> {
    data.samples
        .par_iter()
        .map(|s| Ok(wmmse(&s.h, s.pt, s.sigma2, opts)?.se))
        .collect()
}

fn model_precoders(model: &Model<f64>, samples: &[ChannelSample<f64>], n_rf: usize, batch: usize) -> Result<Vec<ComplexMatrix<f64>>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch.max(1)) {
        let refs: Vec<_> = chunk.iter().collect();
        out.extend(model.infer(&refs, n_rf)?);
    }
    Ok(out)
}

/// Per-sample sum SE achieved by `policy`.
pub fn policy_se(policy: Policy<'_>, data: &Dataset<f64>, n_rf: usize, batch: usize) -> Result<Vec<f64>> {
    let s = &data.samples;
    match policy {
        Policy::Model(m) => model_precoders(m, s, n_rf, batch)?
            .iter()
            .zip(s)
            .map(|(v, c)| sum_se(&c.h, v, c.sigma2))
            .collect(),
        Policy::Wmmse(opts) => s.par_iter().map(|c| Ok(wmmse(&c.h, c.pt, c.sigma2, opts)?.se)).collect(),
        Policy::ZeroForcing => s.par_iter().map(|c| sum_se(&c.h, &zero_forcing(&c.h, c.pt)?, c.sigma2)).collect(),
        Policy::Mrt => s.par_iter().map(|c| sum_se(&c.h, &mrt(&c.h, c.pt)?, c.sigma2)).collect(),
        Policy::RandomPhaseZf { seed } => s
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let mut rng = sample_rng(seed, i as u64);
                let hp = random_phase_zf(&c.h, n_rf, c.pt, &mut rng)?;
                sum_se(&c.h, &hp.effective(), c.sigma2)
            })
            .collect(),
    }
}

/// SE ratio of `policy` against fully-digital WMMSE on every sample of `data`.
/// `n_rf` is ignored by baseband policies. Hybrid models additionally get
/// the random-phase + zero-forcing floor.
pub fn evaluate(policy: Policy<'_>, data: &Dataset<f64>, n_rf: usize, n_train: usize, opts: &EvalOptions) -> Result<Evaluation> {
    let reference = reference_se(data, &opts.wmmse)?;
    evaluate_against(policy, data, n_rf, n_train, opts, reference)
}

/// As [`evaluate`] with precomputed reference SEs.
pub fn evaluate_against(
    policy: Policy<'_>,
    data: &Dataset<f64>,
    n_rf: usize,
    n_train: usize,
    opts: &EvalOptions,
    reference: Vec<f64>,
) -> Result<Evaluation> {
    let first = data.samples.first().ok_or_else(|| Error::Config("empty test set".into()))?;
    if reference.len() != data.len() {
        return Err(Error::Dimension(format!("{} reference values for {} samples", reference.len(), data.len())));
    }
    let (n, k) = (first.n(), first.k());
    let hybrid = matches!(policy, Policy::Model(m) if m.arch().is_hybrid()) || matches!(policy, Policy::RandomPhaseZf { .. });
    let start = Instant::now();
    let se = policy_se(policy, data, n_rf, opts.batch_size)?;
    let seconds = start.elapsed().as_secs_f64();
    let ratios: Vec<f64> = se
        .iter()
        .zip(&reference)
        .map(|(a, b)| if *b > 0.0 { a / b } else { f64::NAN })
        .collect();
    let floor_se = if hybrid && k <= n_rf {
        Some(policy_se(Policy::RandomPhaseZf { seed: opts.floor_seed }, data, n_rf, opts.batch_size)?)
    } else {
        None
    };
    let (mean, std) = mean_std(&ratios);
    let row = ResultRow {
        arch: policy.name(),
        n,
        k,
        n_rf: if hybrid { n_rf } else { 0 },
        snr_db: data.meta.snr_db,
        n_train,
        se_ratio_mean: mean,
        se_ratio_std: std,
        seconds,
        reference: if hybrid { "wmmse_fully_digital".into() } else { "wmmse".into() },
    };
    Ok(Evaluation {
        row,
        se,
        reference_se: reference,
        ratios,
        floor_se,
    })
}
