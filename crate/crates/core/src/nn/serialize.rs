//! Binary model files: a small header, the architecture as JSON, then every
//! layer's state tensors in little-endian order.
//!
//! ```text
//! "HWEV" | u16 version | u8 element bytes | u8 flags
//! [u32 genotype bits | packed bits, MSB first]      (flags & 1)
//! u32 json length | architecture JSON
//! u64 adam steps | u32 layer count
//! per layer: u32 tensor count, per tensor: u8 rank, u32 dims, values
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Architecture, Model, NnError, Real, Tensor};
use crate::genotype::Genotype;

const MAGIC: &[u8; 4] = b"HWEV";
const VERSION: u16 = 1;
const FLAG_GENOTYPE: u8 = 1;

#[derive(Debug, Error)]
pub enum SerializeError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a model file")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("file stores {found}-byte values, reader expects {expected}")]
    ElementType { expected: usize, found: usize },
    #[error("architecture: {0}")]
    Architecture(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] NnError),
    #[error("corrupt file: {0}")]
    Corrupt(String),
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<(), SerializeError> {
    let v = u32::try_from(v).map_err(|_| SerializeError::Corrupt(format!("{v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

/// Serializes `model` (and optionally the genotype it came from).
pub fn write_model<T: Real, W: Write>(
    model: &Model<T>,
    genotype: Option<&Genotype>,
    mut writer: W,
) -> Result<(), SerializeError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::BYTES as u8);
    out.push(if genotype.is_some() { FLAG_GENOTYPE } else { 0 });
    if let Some(g) = genotype {
        put_u32(&mut out, g.len())?;
        for chunk in g.bits().chunks(8) {
            let byte = chunk.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << (7 - i)));
            out.push(byte);
        }
    }
    let json = serde_json::to_vec(model.architecture())?;
    put_u32(&mut out, json.len())?;
    out.extend_from_slice(&json);
    out.extend_from_slice(&model.adam_steps().to_le_bytes());
    put_u32(&mut out, model.layers().len())?;
    for layer in model.layers() {
        let tensors = layer.state_tensors();
        put_u32(&mut out, tensors.len())?;
        for t in tensors {
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                put_u32(&mut out, d)?;
            }
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
    }
    writer.write_all(&out)?;
    writer.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SerializeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| SerializeError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, SerializeError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize, SerializeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

/// Reads a model written by [`write_model`] with the same element type.
pub fn read_model<T: Real, R: Read>(mut reader: R) -> Result<(Model<T>, Option<Genotype>), SerializeError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4).map_err(|_| SerializeError::BadMagic)? != MAGIC {
        return Err(SerializeError::BadMagic);
    }
    let version = u16::from_le_bytes(c.take(2)?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(SerializeError::Version(version));
    }
    let width = c.u8()? as usize;
    if width != T::BYTES {
        return Err(SerializeError::ElementType { expected: T::BYTES, found: width });
    }
    let flags = c.u8()?;
    let genotype = if flags & FLAG_GENOTYPE != 0 {
        let n = c.u32()?;
        let packed = c.take(n.div_ceil(8))?;
        Some(Genotype::new((0..n).map(|i| packed[i / 8] >> (7 - i % 8) & 1 == 1).collect()))
    } else {
        None
    };
    let json_len = c.u32()?;
    let arch: Architecture = serde_json::from_slice(c.take(json_len)?)?;
    let steps = u64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
    // Initial values are overwritten below, so any seed will do.
    let mut model = Model::<T>::from_architecture(arch, &mut ChaCha8Rng::seed_from_u64(0))?;
    let layer_count = c.u32()?;
    if layer_count != model.layers().len() {
        return Err(SerializeError::Corrupt(format!(
            "{layer_count} layers stored, architecture has {}",
            model.layers().len()
        )));
    }
    for (index, layer) in model.layers_mut().iter_mut().enumerate() {
        let count = c.u32()?;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let rank = c.u8()? as usize;
            let shape = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let raw = c.take(n.checked_mul(T::BYTES).ok_or_else(|| SerializeError::Corrupt("size".into()))?)?;
            let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
            tensors.push(Tensor::new(shape, data)?);
        }
        layer.load_state(tensors).map_err(|e| NnError::at(index, e))?;
    }
    if c.pos != bytes.len() {
        return Err(SerializeError::Corrupt(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    model.set_adam_steps(steps);
    Ok((model, genotype))
}

pub fn save_model<T: Real>(model: &Model<T>, genotype: Option<&Genotype>, path: &Path) -> Result<(), SerializeError> {
    write_model(model, genotype, BufWriter::new(File::create(path)?))
}

pub fn load_model<T: Real>(path: &Path) -> Result<(Model<T>, Option<Genotype>), SerializeError> {
    read_model(BufReader::new(File::open(path)?))
}
