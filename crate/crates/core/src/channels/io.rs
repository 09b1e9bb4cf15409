use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex;

use super::{ChannelModel, ChannelSample, Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::numkit::ComplexMatrix;
use crate::Scalar;

pub const MAGIC: &[u8; 4] = b"PEPC";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 40;

/// Metadata lives next to the binary file as `<path>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Layout (little-endian): magic, version u32, N u32, K u32, count u64,
/// Pt f64, σ² f64, then each sample's `N × K` entries row-major as (re, im)
/// f64 pairs.
pub fn save_dataset<T: Scalar>(ds: &Dataset<T>, path: &Path) -> Result<()> {
    let first = ds
        .samples
        .first()
        .ok_or_else(|| Error::Config("cannot save an empty dataset".into()))?;
    let (n, k) = (first.n(), first.k());
    let (pt, sigma2) = (first.pt, first.sigma2);
    let mut buf = Vec::with_capacity(HEADER_LEN + ds.len() * n * k * 16);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&(k as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    buf.extend_from_slice(&pt.as_f64().to_le_bytes());
    buf.extend_from_slice(&sigma2.as_f64().to_le_bytes());
    for (i, s) in ds.samples.iter().enumerate() {
        if s.n() != n || s.k() != k || s.pt != pt || s.sigma2 != sigma2 {
            return Err(Error::Config(format!(
                "sample {i} differs in shape or system constants from sample 0"
            )));
        }
        for r in 0..n {
            for c in 0..k {
                let z = s.h.get(r, c);
                buf.extend_from_slice(&z.re.as_f64().to_le_bytes());
                buf.extend_from_slice(&z.im.as_f64().to_le_bytes());
            }
        }
    }
    fs::write(path, &buf)?;
    let mut meta = ds.meta.clone();
    meta.n = n;
    meta.k = k;
    meta.count = ds.len();
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub(crate) struct Reader<'a> {
    pub(crate) buf: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take<const W: usize>(&mut self, what: &str) -> Result<[u8; W]> {
        let end = self.pos + W;
        if end > self.buf.len() {
            return Err(Error::Format {
                offset: self.pos as u64,
                msg: format!("file truncated while reading {what}"),
            });
        }
        let mut out = [0u8; W];
        out.copy_from_slice(&self.buf[self.pos..end]);
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        self.take::<4>(what).map(u32::from_le_bytes)
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        self.take::<8>(what).map(u64::from_le_bytes)
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        self.take::<8>(what).map(f64::from_le_bytes)
    }
}

pub fn load_dataset<T: Scalar>(path: &Path) -> Result<Dataset<T>> {
    let buf = fs::read(path)?;
    let mut rd = Reader { buf: &buf, pos: 0 };
    if &rd.take::<4>("magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: "bad magic, expected PEPC".into(),
        });
    }
    let version = rd.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let n = rd.u32("N")? as usize;
    let k = rd.u32("K")? as usize;
    let count = rd.u64("count")? as usize;
    let pt = rd.f64("Pt")?;
    let sigma2 = rd.f64("sigma2")?;
    if n == 0 || k == 0 {
        return Err(Error::Format {
            offset: 8,
            msg: format!("zero dimension N={n}, K={k}"),
        });
    }
    let expected = (count as u128) * (n as u128) * (k as u128) * 16 + HEADER_LEN as u128;
    if (buf.len() as u128) != expected {
        let offset = (buf.len() as u128).min(expected) as u64;
        let msg = if (buf.len() as u128) < expected {
            format!("file truncated: {} bytes, header implies {expected}", buf.len())
        } else {
            format!("trailing bytes: {} bytes, header implies {expected}", buf.len())
        };
        return Err(Error::Format { offset, msg });
    }
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let start = rd.pos as u64;
        let mut h = ComplexMatrix::zeros(n, k);
        for r in 0..n {
            for c in 0..k {
                let re = rd.f64("entry")?;
                let im = rd.f64("entry")?;
                h.set(r, c, Complex::new(T::of(re), T::of(im)));
            }
        }
        let s = ChannelSample::new(h, T::of(pt), T::of(sigma2)).map_err(|e| Error::Format {
            offset: start,
            msg: format!("sample {i}: {e}"),
        })?;
        samples.push(s);
    }
    let side = sidecar_path(path);
    let meta = if side.exists() {
        let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(&side)?)?;
        if meta.n != n || meta.k != k || meta.count != count {
            return Err(Error::Format {
                offset: 8,
                msg: format!(
                    "sidecar dims ({}, {}, {}) disagree with header ({n}, {k}, {count})",
                    meta.n, meta.k, meta.count
                ),
            });
        }
        meta
    } else {
        DatasetMeta {
            channel: ChannelModel::External,
            seed: 0,
            n,
            k,
            count,
            snr_db: 10.0 * (pt / sigma2).log10(),
            pt,
        }
    };
    Ok(Dataset { samples, meta })
}
