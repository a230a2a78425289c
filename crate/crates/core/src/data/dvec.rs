//! DVEC: L2-normalized global descriptors keyed by image id.
//!
//! ```text
//! magic "DVEC" | version u16 | dim u32 | count u32 | flatten order u8 | model checksum [u8; 8]
//! count × ( id_len u16 | id bytes (UTF-8) | dim × f32 )
//! ```
//!
//! Flatten order 0 means channel-major, then row-major over the spatial
//! grid of the encoder output.

use std::collections::HashMap;
use std::path::Path;

use super::bin::{self, ByteReader};
use crate::error::{Error, Result};
use crate::ops::dot;

pub const DVEC_MAGIC: &[u8; 4] = b"DVEC";
pub const DVEC_VERSION: u16 = 1;
pub const FLATTEN_CHANNEL_MAJOR: u8 = 0;
/// Largest accepted deviation of a stored descriptor's norm from 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-4;
const KIND: &str = "DVEC";

#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorRecord {
    pub id: String,
    pub vector: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorSet {
    pub dim: usize,
    pub flatten_order: u8,
    pub model_checksum: [u8; 8],
    records: Vec<DescriptorRecord>,
    index: HashMap<String, usize>,
}

impl DescriptorSet {
    pub fn new(dim: usize, model_checksum: [u8; 8]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("descriptor dim must be positive".into()));
        }
        Ok(Self {
            dim,
            flatten_order: FLATTEN_CHANNEL_MAJOR,
            model_checksum,
            records: Vec::new(),
            index: HashMap::new(),
        })
    }

    /// Adds a descriptor; it must have the set's dimension and unit norm.
    pub fn push(&mut self, id: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "descriptor {id:?} has {} entries, set dim is {}",
                vector.len(),
                self.dim
            )));
        }
        let norm = dot(&vector, &vector).sqrt();
        if !((norm - 1.0).abs() <= UNIT_NORM_TOLERANCE) {
            return Err(Error::Data(format!(
                "descriptor {id:?} has norm {norm}, expected 1 ± {UNIT_NORM_TOLERANCE}"
            )));
        }
        if self.index.contains_key(&id) {
            return Err(Error::Data(format!("duplicate image id {id:?}")));
        }
        self.index.insert(id.clone(), self.records.len());
        self.records.push(DescriptorRecord { id, vector });
        Ok(())
    }

    pub fn records(&self) -> &[DescriptorRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&DescriptorRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn write_dvec_bytes(set: &DescriptorSet) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(23 + set.len() * (set.dim * 4 + 16));
    out.extend_from_slice(DVEC_MAGIC);
    bin::put_u16(&mut out, DVEC_VERSION);
    bin::put_u32(&mut out, bin::to_u32(set.dim, "dim", KIND)?);
    bin::put_u32(&mut out, bin::to_u32(set.len(), "count", KIND)?);
    out.push(set.flatten_order);
    out.extend_from_slice(&set.model_checksum);
    for r in set.records() {
        bin::put_string(&mut out, &r.id, KIND)?;
        bin::put_f32s(&mut out, &r.vector);
    }
    Ok(out)
}

pub fn read_dvec_bytes(bytes: &[u8]) -> Result<DescriptorSet> {
    let mut r = ByteReader::new(KIND, bytes);
    r.magic(DVEC_MAGIC)?;
    let version = r.u16("version")?;
    if version != DVEC_VERSION {
        return Err(Error::format(
            KIND,
            format!("unsupported version {version}, expected {DVEC_VERSION}"),
        ));
    }
    let dim = r.u32("dim")? as usize;
    let count = r.u32("count")? as usize;
    let flatten_order = r.u8("flatten order")?;
    if flatten_order != FLATTEN_CHANNEL_MAJOR {
        return Err(Error::format(
            KIND,
            format!("unknown flatten order tag {flatten_order}"),
        ));
    }
    let checksum: [u8; 8] = r.take(8, "model checksum")?.try_into().unwrap();
    let mut set =
        DescriptorSet::new(dim, checksum).map_err(|e| Error::format(KIND, e.to_string()))?;
    for i in 0..count {
        let id = r.string(&format!("id of record {i}"))?;
        let v = r.f32s(dim, &format!("vector of record {i} ({id:?})"))?;
        set.push(id, v)
            .map_err(|e| Error::format(KIND, format!("record {i}: {e}")))?;
    }
    r.finish()?;
    Ok(set)
}

pub fn write_dvec(path: impl AsRef<Path>, set: &DescriptorSet) -> Result<()> {
    bin::write_file(path.as_ref(), &write_dvec_bytes(set)?)
}

pub fn read_dvec(path: impl AsRef<Path>) -> Result<DescriptorSet> {
    read_dvec_bytes(&bin::read_file(path.as_ref())?)
}
