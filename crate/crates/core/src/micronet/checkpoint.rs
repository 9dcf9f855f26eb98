//! Binary checkpoint format.
//!
//! ```text
//! "MSPT"               4 bytes magic
//! version              u32
//! arch fingerprint     32 bytes (SHA-256 of the architecture)
//! step counter         u64
//! flags                u8, bit 0 = batch-norm statistics stale
//! record count         u32
//! record*              name_len u32, UTF-8 name, ndims u32, dims u64*, f64 payload
//! ```
//!
//! All integers and floats are little-endian. Learnable parameters come first
//! in model order, followed by `<layer>.running_mean` / `<layer>.running_var`
//! for every batch-norm layer.

use std::fs;
use std::path::Path;

use super::arch::ArchConfig;
use super::model::{build_model, ModelState};
use crate::error::{Error, Result};
use crate::tensor::{RunningStats, Tensor};

pub const MAGIC: &[u8; 4] = b"MSPT";
pub const FORMAT_VERSION: u32 = 1;

const FLAG_BN_STALE: u8 = 1;

fn put_record(buf: &mut Vec<u8>, name: &str, dims: &[usize], values: &[f64]) {
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(model: &ModelState) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&model.fingerprint());
    buf.extend_from_slice(&model.step().to_le_bytes());
    buf.push(if model.bn_stale() { FLAG_BN_STALE } else { 0 });
    let records = model.params().len() + 2 * model.running_stats().len();
    buf.extend_from_slice(&(records as u32).to_le_bytes());
    for (name, t) in model.params() {
        put_record(&mut buf, name, t.shape(), t.data());
    }
    for (name, stats) in model.running_stats() {
        let c = stats.mean.len();
        put_record(&mut buf, &format!("{name}.running_mean"), &[c], &stats.mean);
        put_record(&mut buf, &format!("{name}.running_var"), &[c], &stats.var);
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated checkpoint: needed {n} bytes for {what} at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn record(&mut self) -> Result<(String, Vec<usize>, Vec<f64>)> {
        let len = self.u32("record name length")? as usize;
        let name = std::str::from_utf8(self.take(len, "record name")?)
            .map_err(|e| Error::Format(format!("record name is not UTF-8: {e}")))?
            .to_string();
        let ndims = self.u32("record rank")? as usize;
        let mut dims = Vec::with_capacity(ndims.min(8));
        for _ in 0..ndims {
            dims.push(self.u64("record dims")? as usize);
        }
        let numel: usize = dims.iter().product();
        let payload = self.take(numel.checked_mul(8).ok_or_else(|| Error::Format("record too large".into()))?, &name)?;
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((name, dims, values))
    }
}

/// Decode a checkpoint for the given architecture.
pub fn decode(bytes: &[u8], arch: &ArchConfig) -> Result<ModelState> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic, not an MSPT checkpoint".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let fingerprint: [u8; 32] = r.take(32, "fingerprint")?.try_into().unwrap();
    if fingerprint != arch.fingerprint() {
        return Err(Error::IncompatibleArchitecture(
            "checkpoint fingerprint does not match the requested architecture".into(),
        ));
    }
    let step = r.u64("step counter")?;
    let flags = r.take(1, "flags")?[0];
    let count = r.u32("record count")? as usize;

    let skeleton = build_model(arch, 0)?;
    let expected = skeleton.params().len() + 2 * skeleton.running_stats().len();
    if count != expected {
        return Err(Error::Format(format!(
            "checkpoint has {count} records, architecture needs {expected}"
        )));
    }

    let mut params = Vec::with_capacity(skeleton.params().len());
    for (name, t) in skeleton.params() {
        let (rname, dims, values) = r.record()?;
        if &rname != name || dims != t.shape() {
            return Err(Error::Format(format!(
                "record {rname} {dims:?} where {name} {:?} was expected",
                t.shape()
            )));
        }
        params.push((rname, Tensor::new(dims, values)?));
    }
    let mut running = Vec::with_capacity(skeleton.running_stats().len());
    for (name, stats) in skeleton.running_stats() {
        let c = stats.mean.len();
        let mut read = |suffix: &str| -> Result<Vec<f64>> {
            let (rname, dims, values) = r.record()?;
            let want = format!("{name}.{suffix}");
            if rname != want || dims != [c] {
                return Err(Error::Format(format!("record {rname} {dims:?} where {want} [{c}] was expected")));
            }
            Ok(values)
        };
        let mean = read("running_mean")?;
        let var = read("running_var")?;
        running.push((name.clone(), RunningStats { mean, var }));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after last record",
            bytes.len() - r.pos
        )));
    }
    Ok(ModelState::from_parts(
        arch.clone(),
        params,
        running,
        flags & FLAG_BN_STALE != 0,
        step,
    ))
}

pub fn save_checkpoint(model: &ModelState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>, arch: &ArchConfig) -> Result<ModelState> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, arch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let arch = ArchConfig::desk();
        let mut m = build_model(&arch, 3).unwrap();
        m.set_step(12345);
        m.running_stats_mut()[0].1.mean[0] = 0.125;
        m.set_bn_stale(true);
        let back = decode(&encode(&m), &arch).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn edited_fingerprint_is_rejected() {
        let arch = ArchConfig::desk();
        let mut bytes = encode(&build_model(&arch, 0).unwrap());
        bytes[8] ^= 0xff;
        assert!(matches!(decode(&bytes, &arch), Err(Error::IncompatibleArchitecture(_))));
    }

    #[test]
    fn other_architecture_is_rejected() {
        let arch = ArchConfig::desk();
        let bytes = encode(&build_model(&arch, 0).unwrap());
        let mut other = arch.clone();
        other.head_hidden = 16;
        assert!(matches!(decode(&bytes, &other), Err(Error::IncompatibleArchitecture(_))));
    }

    #[test]
    fn truncation_is_a_format_error() {
        let arch = ArchConfig::desk();
        let bytes = encode(&build_model(&arch, 0).unwrap());
        for cut in [0, 3, 20, 60, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut], &arch), Err(Error::Format(_))), "cut at {cut}");
        }
    }
}
