//! Channel datasets: i.i.d. Rayleigh and Saleh-Valenzuela generators plus a
//! deterministic binary file format.
//!
//! Sample `i` of a dataset is drawn from its own ChaCha stream keyed by
//! `(seed, i)`, so generation order does not matter and any sample can be
//! regenerated from the metadata alone.

mod generate;
pub(crate) mod io;

pub use generate::{
    gen_rayleigh, gen_saleh_valenzuela, rayleigh_sample, sample_rng, sv_paths, sv_sample, SvParams,
    SvPaths, SvRay,
};
pub use io::{load_dataset, save_dataset, sidecar_path, FORMAT_VERSION, MAGIC};

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numkit::ComplexMatrix;
use crate::Scalar;

/// One channel realization with its system constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample<T: Scalar> {
    /// `N × K`: column `k` is the channel of user `k`.
    pub h: ComplexMatrix<T>,
    pub pt: T,
    pub sigma2: T,
}

impl<T: Scalar> ChannelSample<T> {
    pub fn new(h: ComplexMatrix<T>, pt: T, sigma2: T) -> Result<Self> {
        if h.rows() == 0 || h.cols() == 0 {
            return Err(dim_err(format!("channel of size {}x{}", h.rows(), h.cols())));
        }
        if !h.is_finite() {
            return Err(Error::Numeric("channel contains non-finite entries".into()));
        }
        if !(sigma2 > T::zero()) || !(pt > T::zero()) {
            return Err(Error::Domain(format!("need pt > 0 and sigma2 > 0, got {pt} / {sigma2}")));
        }
        Ok(Self { h, pt, sigma2 })
    }

    pub fn n(&self) -> usize {
        self.h.rows()
    }

    pub fn k(&self) -> usize {
        self.h.cols()
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.pt / self.sigma2).as_f64().log10()
    }
}

/// Noise power for unit transmit power at the given SNR.
pub fn sigma2_for_snr(pt: f64, snr_db: f64) -> f64 {
    pt / 10f64.powf(snr_db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ChannelModel {
    Rayleigh,
    SalehValenzuela(SvParams),
    /// Loaded from a file without a metadata sidecar.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub channel: ChannelModel,
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub count: usize,
    pub snr_db: f64,
    pub pt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar> {
    pub samples: Vec<ChannelSample<T>>,
    pub meta: DatasetMeta,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Re-runs the generator recorded in the metadata.
    pub fn regenerate(meta: &DatasetMeta) -> Result<Self> {
        match &meta.channel {
            ChannelModel::Rayleigh => gen_rayleigh(meta.n, meta.k, meta.count, meta.snr_db, meta.seed),
            ChannelModel::SalehValenzuela(p) => {
                gen_saleh_valenzuela(meta.n, meta.k, p, meta.count, meta.snr_db, meta.seed)
            }
            ChannelModel::External => Err(Error::Config(
                "external dataset has no generator to replay".into(),
            )),
        }
    }

    /// First `count` samples.
    pub fn head(&self, count: usize) -> Self {
        let count = count.min(self.len());
        let mut meta = self.meta.clone();
        meta.count = count;
        Self {
            samples: self.samples[..count].to_vec(),
            meta,
        }
    }
}
