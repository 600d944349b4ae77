//! `RTXC` array container.
//!
//! Layout: magic `RTXC`, format version (u32 LE), header length (u64 LE),
//! JSON header, payload. The header lists every array with its name,
//! element type, shape and byte range in the payload, plus free-form JSON
//! metadata. Arrays are stored C-ordered little-endian; complex values as
//! interleaved 32-bit float pairs.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::C64;

pub const MAGIC: &[u8; 4] = b"RTXC";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    F32,
    C32,
    U8,
    I64,
}

impl Dtype {
    pub fn size(&self) -> usize {
        match self {
            Dtype::F64 | Dtype::C32 | Dtype::I64 => 8,
            Dtype::F32 => 4,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    F64(ArrayD<f64>),
    F32(ArrayD<f32>),
    C32(ArrayD<Complex32>),
    U8(ArrayD<u8>),
    I64(ArrayD<i64>),
}

impl ArrayData {
    pub fn dtype(&self) -> Dtype {
        match self {
            ArrayData::F64(_) => Dtype::F64,
            ArrayData::F32(_) => Dtype::F32,
            ArrayData::C32(_) => Dtype::C32,
            ArrayData::U8(_) => Dtype::U8,
            ArrayData::I64(_) => Dtype::I64,
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            ArrayData::F64(a) => a.shape().to_vec(),
            ArrayData::F32(a) => a.shape().to_vec(),
            ArrayData::C32(a) => a.shape().to_vec(),
            ArrayData::U8(a) => a.shape().to_vec(),
            ArrayData::I64(a) => a.shape().to_vec(),
        }
    }

    /// Complex array narrowed to 32-bit components.
    pub fn from_c64<D: ndarray::Dimension>(a: &ndarray::Array<C64, D>) -> Self {
        ArrayData::C32(a.mapv(|z| Complex32::new(z.re as f32, z.im as f32)).into_dyn())
    }

    pub fn from_f64<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> Self {
        ArrayData::F64(a.clone().into_dyn())
    }

    pub fn from_bool<D: ndarray::Dimension>(a: &ndarray::Array<bool, D>) -> Self {
        ArrayData::U8(a.mapv(u8::from).into_dyn())
    }

    pub fn vector(v: &[f64]) -> Self {
        ArrayData::F64(ArrayD::from_shape_vec(IxDyn(&[v.len()]), v.to_vec()).expect("1-D shape"))
    }

    pub fn as_f64(&self) -> Option<&ArrayD<f64>> {
        match self {
            ArrayData::F64(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_c32(&self) -> Option<&ArrayD<Complex32>> {
        match self {
            ArrayData::C32(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_u8(&self) -> Option<&ArrayD<u8>> {
        match self {
            ArrayData::U8(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<&ArrayD<i64>> {
        match self {
            ArrayData::I64(a) => Some(a),
            _ => None,
        }
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            ArrayData::F64(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            ArrayData::F32(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            ArrayData::C32(a) => a.iter().for_each(|v| {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }),
            ArrayData::U8(a) => out.extend(a.iter()),
            ArrayData::I64(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        }
    }

    fn read_le(dtype: Dtype, shape: &[usize], bytes: &[u8]) -> Result<Self> {
        let dim = IxDyn(shape);
        let shaped = |e: ndarray::ShapeError| Error::Format(format!("bad shape {shape:?}: {e}"));
        let f32_at = |c: &[u8]| f32::from_le_bytes(c.try_into().expect("4 bytes"));
        Ok(match dtype {
            Dtype::F64 => ArrayData::F64(
                ArrayD::from_shape_vec(dim, bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
                    .map_err(shaped)?,
            ),
            Dtype::F32 => ArrayData::F32(ArrayD::from_shape_vec(dim, bytes.chunks_exact(4).map(f32_at).collect()).map_err(shaped)?),
            Dtype::C32 => ArrayData::C32(
                ArrayD::from_shape_vec(
                    dim,
                    bytes.chunks_exact(8).map(|c| Complex32::new(f32_at(&c[..4]), f32_at(&c[4..]))).collect(),
                )
                .map_err(shaped)?,
            ),
            Dtype::U8 => ArrayData::U8(ArrayD::from_shape_vec(dim, bytes.to_vec()).map_err(shaped)?),
            Dtype::I64 => ArrayData::I64(
                ArrayD::from_shape_vec(dim, bytes.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
                    .map_err(shaped)?,
            ),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    dtype: Dtype,
    shape: Vec<usize>,
    offset: u64,
    nbytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    arrays: Vec<ArrayEntry>,
    metadata: serde_json::Value,
}

/// Named arrays plus JSON metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub arrays: Vec<(String, ArrayData)>,
    pub metadata: serde_json::Value,
}

impl Container {
    pub fn new(metadata: serde_json::Value) -> Self {
        Self {
            arrays: Vec::new(),
            metadata,
        }
    }

    pub fn with(mut self, name: &str, data: ArrayData) -> Self {
        self.arrays.push((name.to_string(), data));
        self
    }

    pub fn get(&self, name: &str) -> Option<&ArrayData> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut seen = BTreeSet::new();
        let mut payload = Vec::new();
        let mut entries = Vec::with_capacity(self.arrays.len());
        for (name, data) in &self.arrays {
            if !seen.insert(name.as_str()) {
                return Err(Error::Format(format!("duplicate array name {name:?}")));
            }
            let offset = payload.len() as u64;
            data.write_le(&mut payload);
            entries.push(ArrayEntry {
                name: name.clone(),
                dtype: data.dtype(),
                shape: data.shape(),
                offset,
                nbytes: payload.len() as u64 - offset,
            });
        }
        let header = serde_json::to_vec(&Header {
            arrays: entries,
            metadata: self.metadata.clone(),
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Format(format!("{} bytes is shorter than the fixed preamble", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}, expected {VERSION}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if hlen > body.len() {
            return Err(Error::Format(format!("header of {hlen} bytes exceeds the file")));
        }
        let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| Error::Format(format!("header: {e}")))?;
        let payload = &body[hlen..];
        let mut end = 0u64;
        for e in &header.arrays {
            let expected = e.shape.iter().try_fold(e.dtype.size() as u64, |acc, &d| acc.checked_mul(d as u64));
            if expected != Some(e.nbytes) {
                return Err(Error::Format(format!(
                    "array {:?}: shape {:?} of {:?} does not match {} bytes",
                    e.name, e.shape, e.dtype, e.nbytes
                )));
            }
            if e.offset != end {
                return Err(Error::Format(format!("array {:?} is not contiguous", e.name)));
            }
            end = e.offset + e.nbytes;
        }
        if end != payload.len() as u64 {
            return Err(Error::Format(format!(
                "payload holds {} bytes, header declares {end}",
                payload.len()
            )));
        }
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for e in &header.arrays {
            let slice = &payload[e.offset as usize..(e.offset + e.nbytes) as usize];
            arrays.push((e.name.clone(), ArrayData::read_le(e.dtype, &e.shape, slice)?));
        }
        Ok(Self {
            arrays,
            metadata: header.metadata,
        })
    }
}

pub fn write_container(path: &Path, container: &Container) -> Result<()> {
    std::fs::write(path, container.to_bytes()?)?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<Container> {
    Container::from_bytes(&std::fs::read(path)?)
}
