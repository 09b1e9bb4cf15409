use serde::{Deserialize, Serialize};

use super::data::Part;
use super::eval::{evaluate, Policy};
use super::report::ResultRow;
use super::train::{fit, TrainOptions};
use crate::channels::gen_rayleigh;
use crate::error::{Error, Result};
use crate::models::{Arch, ModelSpec};

fn variants() -> Vec<Arch> {
    vec![Arch::Gformer2d, Arch::F2dGformer, Arch::Gformer2dWoUk, Arch::Gformer2dWoUv]
}

fn snrs() -> Vec<f64> {
    vec![5.0, 10.0, 20.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblateConfig {
    pub n: usize,
    pub k: usize,
    #[serde(default = "snrs")]
    pub snrs_db: Vec<f64>,
    #[serde(default = "variants")]
    pub variants: Vec<Arch>,
    pub hidden: Vec<usize>,
    #[serde(default = "one")]
    pub heads: usize,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default)]
    pub n_valid: usize,
    #[serde(flatten)]
    pub options: TrainOptions,
}

fn one() -> usize {
    1
}

/// One cell of the variant × SNR grid. `row.seconds` is the inference time
/// on the test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub row: ResultRow,
    pub train_seconds: f64,
    pub epochs: usize,
}

/// Trains every variant at every SNR on identically seeded data.
pub fn ablate_gformer(cfg: &AblateConfig) -> Result<Vec<AblationCell>> {
    for v in &cfg.variants {
        if !matches!(v, Arch::Gformer2d | Arch::F2dGformer | Arch::Gformer2dWoUk | Arch::Gformer2dWoUv) {
            return Err(Error::Config(format!("{v} is not a 2D graph-transformer variant")));
        }
    }
    let seed = cfg.options.seed;
    let mut cells = Vec::new();
    for (si, &snr) in cfg.snrs_db.iter().enumerate() {
        let base = seed.wrapping_mul(100).wrapping_add(10 * si as u64);
        let train = [Part {
            data: gen_rayleigh(cfg.n, cfg.k, cfg.n_train, snr, base + 1)?,
            n_rf: 0,
        }];
        let valid: Vec<Part> = if cfg.n_valid > 0 {
            vec![Part {
                data: gen_rayleigh(cfg.n, cfg.k, cfg.n_valid, snr, base + 2)?,
                n_rf: 0,
            }]
        } else {
            Vec::new()
        };
        let test = gen_rayleigh(cfg.n, cfg.k, cfg.n_test, snr, base + 3)?;
        for &arch in &cfg.variants {
            let spec = ModelSpec::with_hidden(arch, &cfg.hidden, cfg.heads, cfg.n, cfg.k, 0);
            let out = fit(spec, &train, &valid, &cfg.options)?;
            let e = evaluate(Policy::Model(&out.model), &test, 0, out.n_train, &cfg.options.eval)?;
            cells.push(AblationCell {
                row: e.row,
                train_seconds: out.seconds,
                epochs: out.history.len(),
            });
        }
    }
    Ok(cells)
}
