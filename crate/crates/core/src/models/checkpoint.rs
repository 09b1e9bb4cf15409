use std::fs;
use std::path::Path;

use super::model::{Model, Param};
use super::spec::{Arch, ModelSpec};
use crate::channels::io::Reader;
use crate::error::{Error, Result};
use crate::numkit::Tensor;
use crate::Scalar;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"PEPW";
pub const WEIGHTS_VERSION: u32 = 1;

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

fn put_f64s<T: Scalar>(buf: &mut Vec<u8>, xs: &[T]) {
    for x in xs {
        buf.extend_from_slice(&x.as_f64().to_le_bytes());
    }
}

/// Little-endian: magic, version u32, arch id, spec JSON, parameter count
/// u32, then per parameter name, rank u32, dims u64, f64 data; finally the
/// virtual vector as length u32 plus f64s. Strings are u32-length-prefixed.
pub fn encode_model<T: Scalar>(model: &Model<T>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(WEIGHTS_MAGIC);
    buf.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    put_str(&mut buf, model.arch().id());
    put_str(&mut buf, &serde_json::to_string(model.spec())?);
    buf.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for p in model.params() {
        put_str(&mut buf, &p.name);
        let shape = p.value.shape();
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        put_f64s(&mut buf, p.value.data());
    }
    buf.extend_from_slice(&(model.virtual_vec().len() as u32).to_le_bytes());
    put_f64s(&mut buf, model.virtual_vec());
    Ok(buf)
}

fn get_str(rd: &mut Reader<'_>, what: &str) -> Result<String> {
    let len = rd.u32(what)? as usize;
    let at = rd.pos;
    if at + len > rd.buf.len() {
        return Err(Error::Format {
            offset: at as u64,
            msg: format!("file truncated while reading {what}"),
        });
    }
    let s = std::str::from_utf8(&rd.buf[at..at + len]).map_err(|_| Error::Format {
        offset: at as u64,
        msg: format!("{what} is not UTF-8"),
    })?;
    rd.pos += len;
    Ok(s.to_string())
}

pub fn decode_model<T: Scalar>(buf: &[u8]) -> Result<Model<T>> {
    let mut rd = Reader::new(buf);
    if &rd.take::<4>("magic")? != WEIGHTS_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: "bad magic, expected PEPW".into(),
        });
    }
    let version = rd.u32("version")?;
    if version != WEIGHTS_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: WEIGHTS_VERSION,
        });
    }
    let id_at = rd.pos as u64;
    let arch: Arch = get_str(&mut rd, "arch id")?.parse()?;
    let spec_at = rd.pos as u64;
    let spec: ModelSpec = serde_json::from_str(&get_str(&mut rd, "spec")?).map_err(|e| Error::Format {
        offset: spec_at,
        msg: format!("spec: {e}"),
    })?;
    if spec.arch != arch {
        return Err(Error::Format {
            offset: id_at,
            msg: format!("arch id {arch} disagrees with spec ({})", spec.arch),
        });
    }
    let count = rd.u32("parameter count")? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name = get_str(&mut rd, "parameter name")?;
        let rank = rd.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(rd.u64("dimension")? as usize);
        }
        let len: usize = shape.iter().product();
        if rd.pos + 8 * len > buf.len() {
            return Err(Error::Format {
                offset: rd.pos as u64,
                msg: format!("file truncated in parameter {name}"),
            });
        }
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(T::of(rd.f64("weight")?));
        }
        params.push(Param {
            name,
            value: Tensor::new(&shape, data)?,
        });
    }
    let vlen = rd.u32("virtual vector length")? as usize;
    let mut virtual_vec = Vec::with_capacity(vlen);
    for _ in 0..vlen {
        virtual_vec.push(T::of(rd.f64("virtual vector")?));
    }
    if rd.pos != buf.len() {
        return Err(Error::Format {
            offset: rd.pos as u64,
            msg: format!("{} trailing bytes", buf.len() - rd.pos),
        });
    }
    Model::from_parts(spec, params, virtual_vec)
}

pub fn save_model<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<Model<T>> {
    decode_model(&fs::read(path)?)
}
