use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::channels::{load_dataset, Dataset, DatasetMeta};
use crate::error::{Error, Result};

/// Where a dataset comes from: a file written by `save_dataset`, or a
/// generator replayed from its metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Path(PathBuf),
    Generate(DatasetMeta),
}

/// A dataset reference plus the RF-chain count used with it (hybrid models).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPart {
    #[serde(flatten)]
    pub source: DataSource,
    #[serde(default)]
    pub n_rf: Option<usize>,
}

impl DataPart {
    pub fn generate(meta: DatasetMeta) -> Self {
        Self {
            source: DataSource::Generate(meta),
            n_rf: None,
        }
    }

    pub fn with_n_rf(mut self, n_rf: usize) -> Self {
        self.n_rf = Some(n_rf);
        self
    }

    pub fn load(&self) -> Result<Dataset<f64>> {
        match &self.source {
            DataSource::Path(p) => {
                if !p.exists() {
                    return Err(Error::Config(format!("dataset file {} does not exist", p.display())));
                }
                load_dataset(p)
            }
            DataSource::Generate(meta) => Dataset::regenerate(meta),
        }
    }
}

/// A loaded single-size dataset and its RF-chain count.
#[derive(Debug, Clone)]
pub struct Part {
    pub data: Dataset<f64>,
    pub n_rf: usize,
}

pub fn load_parts(parts: &[DataPart], default_n_rf: usize) -> Result<Vec<Part>> {
    parts
        .iter()
        .map(|p| {
            Ok(Part {
                data: p.load()?,
                n_rf: p.n_rf.unwrap_or(default_n_rf),
            })
        })
        .collect()
}
