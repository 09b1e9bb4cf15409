use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const CSV_HEADER: &str = "arch,N,K,NRF,snr_db,n_train,se_ratio_mean,se_ratio_std,seconds";

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub arch: String,
    pub n: usize,
    pub k: usize,
    pub n_rf: usize,
    pub snr_db: f64,
    pub n_train: usize,
    pub se_ratio_mean: f64,
    pub se_ratio_std: f64,
    pub seconds: f64,
    /// Denominator of the ratio, e.g. `wmmse` or `wmmse_fully_digital`.
    pub reference: String,
}

impl ResultRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.3}",
            self.arch,
            self.n,
            self.k,
            self.n_rf,
            self.snr_db,
            self.n_train,
            self.se_ratio_mean,
            self.se_ratio_std,
            self.seconds
        )
    }
}

pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

/// Writes `<stem>.csv` and `<stem>.json` side by side.
pub fn write_rows(rows: &[ResultRow], stem: &Path) -> Result<()> {
    if let Some(dir) = stem.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(stem.with_extension("csv"), to_csv(rows))?;
    fs::write(stem.with_extension("json"), serde_json::to_string_pretty(rows)?)?;
    Ok(())
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
