//! `DFCK` containers: named tensors in a little-endian binary layout.
//!
//! ```text
//! "DFCK" | version u32 | count u32
//! per entry: name_len u16 | name | dtype u8 | rank u8 | extents u32×rank | payload
//! ```
//!
//! dtype 0 is 64-bit real, 1 is 32-bit real, 2 is complex stored as
//! `(re, im)` pairs of 64-bit reals. Complex extents omit the pair axis.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{CheckpointError, Result};
use crate::mixers::interpolate_filter_basis;
use crate::param::ParamKind;
use crate::tensor::{Real, Tensor};

use super::{build_model, Model, ModelConfig};

pub const CONTAINER_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"DFCK";

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub kind: ParamKind,
    /// Complex values keep their trailing `(re, im)` axis here.
    pub value: Tensor,
}

const REAL_CODE: u8 = if cfg!(feature = "f32") { 1 } else { 0 };

pub fn encode(records: &[Record]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        let name = r.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        let shape = match r.kind {
            ParamKind::Real => r.value.shape(),
            ParamKind::Complex => &r.value.shape()[..r.value.rank() - 1],
        };
        out.push(match r.kind {
            ParamKind::Real => REAL_CODE,
            ParamKind::Complex => 2,
        });
        out.push(shape.len() as u8);
        for &e in shape {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        match r.kind {
            ParamKind::Real => {
                for &v in r.value.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            ParamKind::Complex => {
                for &v in r.value.data() {
                    out.extend_from_slice(&(v as f64).to_le_bytes());
                }
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(CheckpointError::Truncated(what))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode(buf: &[u8]) -> Result<Vec<Record>, CheckpointError> {
    let mut r = Reader { buf, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(CheckpointError::Magic(magic));
    }
    let version = r.u32("version")?;
    if version != CONTAINER_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let count = r.u32("entry count")?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?).map_err(|_| CheckpointError::Name)?.to_string();
        if !seen.insert(name.clone()) {
            return Err(CheckpointError::Duplicate(name));
        }
        let dtype = r.u8("dtype")?;
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank + 1);
        for _ in 0..rank {
            shape.push(r.u32("extents")? as usize);
        }
        let n: usize = shape.iter().product();
        let (kind, data) = match dtype {
            0 => {
                let bytes = r.take(n * 8, "payload")?;
                let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()) as Real).collect();
                (ParamKind::Real, data)
            }
            1 => {
                let bytes = r.take(n * 4, "payload")?;
                let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as Real).collect();
                (ParamKind::Real, data)
            }
            2 => {
                let bytes = r.take(n * 16, "payload")?;
                let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()) as Real).collect();
                shape.push(2);
                (ParamKind::Complex, data)
            }
            d => return Err(CheckpointError::Dtype(d)),
        };
        let value = Tensor::new(shape.clone(), data).map_err(|_| CheckpointError::ShapeMismatch {
            name: name.clone(),
            expected: shape.clone(),
            got: shape,
        })?;
        out.push(Record { name, kind, value });
    }
    if r.pos != buf.len() {
        return Err(CheckpointError::Truncated("trailing bytes after the last entry"));
    }
    Ok(out)
}

pub fn write_container(path: &Path, records: &[Record]) -> Result<()> {
    fs::write(path, encode(records))?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<Vec<Record>> {
    let buf = fs::read(path)?;
    Ok(decode(&buf)?)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let records: Vec<Record> =
        model.store.iter().map(|p| Record { name: p.name.clone(), kind: p.kind, value: p.value.clone() }).collect();
    write_container(path, &records)
}

/// Writes captured activations as `act.<index>` entries.
pub fn save_activations(path: &Path, acts: &[Tensor]) -> Result<()> {
    let records: Vec<Record> = acts
        .iter()
        .enumerate()
        .map(|(i, t)| Record { name: format!("act.{i}"), kind: ParamKind::Real, value: t.clone() })
        .collect();
    write_container(path, &records)
}

impl Model {
    /// Assigns parameters by name. Spectral filters whose stored extents
    /// differ from the model's are bicubically resampled to fit.
    pub fn load_records(&mut self, records: &[Record]) -> Result<()> {
        let spectral: HashMap<_, _> = self.spectral_params().into_iter().collect();
        let mut assigned = HashSet::new();
        for r in records {
            let id = self.store.id(&r.name).ok_or_else(|| CheckpointError::UnknownParameter(r.name.clone()))?;
            let target = self.store.value(id).shape().to_vec();
            let mismatch = || CheckpointError::ShapeMismatch {
                name: r.name.clone(),
                expected: target.clone(),
                got: r.value.shape().to_vec(),
            };
            if r.kind != self.store.get(id).kind {
                return Err(mismatch().into());
            }
            let value = if r.value.shape() == target {
                r.value.clone()
            } else if let Some(&(h, w)) = spectral.get(&id) {
                if r.value.rank() != target.len() || r.value.shape()[2..] != target[2..] {
                    return Err(mismatch().into());
                }
                let v = interpolate_filter_basis(&r.value, h, w)?;
                if v.shape() != target {
                    return Err(mismatch().into());
                }
                v
            } else {
                return Err(mismatch().into());
            };
            self.store.set_value(id, value);
            assigned.insert(id);
        }
        if let Some(p) = self.store.ids().find(|id| !assigned.contains(id)) {
            return Err(CheckpointError::MissingParameter(self.store.get(p).name.clone()).into());
        }
        Ok(())
    }
}

/// Builds a model for `cfg` and fills it from the container at `path`.
pub fn load_checkpoint(path: &Path, cfg: &ModelConfig) -> Result<Model> {
    let records = read_container(path)?;
    let mut model = build_model(cfg, 0)?;
    model.load_records(&records)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Record> {
        vec![
            Record {
                name: "a".into(),
                kind: ParamKind::Real,
                value: Tensor::from_fn([2, 3], |i| i as Real * 0.1 - 0.2),
            },
            Record {
                name: "k".into(),
                kind: ParamKind::Complex,
                value: Tensor::from_fn([3, 2, 2], |i| (i as Real).sqrt()),
            },
        ]
    }

    #[test]
    fn bytes_round_trip() {
        let recs = sample();
        assert_eq!(decode(&encode(&recs)).unwrap(), recs);
    }

    #[test]
    fn header_errors_are_distinct() {
        let mut bytes = encode(&sample());
        let good = bytes.clone();
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(CheckpointError::Magic(_))));
        let mut bytes = good.clone();
        bytes[4] = 9;
        assert!(matches!(decode(&bytes), Err(CheckpointError::Version(9))));
        let short = &good[..good.len() - 3];
        assert!(matches!(decode(short), Err(CheckpointError::Truncated(_))));
    }
}
