//! FMAP: a set of equally shaped feature maps keyed by image id.
//!
//! ```text
//! magic "FMAP" | version u16 | backbone u8 | c u32 | h u32 | w u32 | count u32
//! count × ( id_len u16 | id bytes (UTF-8) | c·h·w × f32 )
//! ```

use std::collections::HashSet;
use std::path::Path;

use super::bin::{self, ByteReader};
use crate::error::{Error, Result};
use crate::model::Backbone;
use crate::tensor::{MapDims, Tensor4};

pub const FMAP_MAGIC: &[u8; 4] = b"FMAP";
pub const FMAP_VERSION: u16 = 1;
const KIND: &str = "FMAP";

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMapSet {
    pub backbone: Backbone,
    pub dims: MapDims,
    records: Vec<FeatureRecord>,
    ids: HashSet<String>,
}

impl FeatureMapSet {
    pub fn new(backbone: Backbone, dims: MapDims) -> Self {
        Self {
            backbone,
            dims,
            records: Vec::new(),
            ids: HashSet::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, data: Vec<f32>) -> Result<()> {
        let id = id.into();
        if data.len() != self.dims.len() {
            return Err(Error::Shape(format!(
                "feature map {id:?} has {} values, header dims {} need {}",
                data.len(),
                self.dims,
                self.dims.len()
            )));
        }
        if !self.ids.insert(id.clone()) {
            return Err(Error::Data(format!("duplicate image id {id:?}")));
        }
        self.records.push(FeatureRecord { id, data });
        Ok(())
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }

    /// Stacks the selected records into one batch tensor.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor4> {
        Tensor4::stack(
            self.dims.batch(1),
            indices.iter().map(|&i| self.records[i].data.as_slice()),
        )
    }
}

pub fn write_fmap_bytes(set: &FeatureMapSet) -> Result<Vec<u8>> {
    check_backbone_dims(set.backbone, set.dims)?;
    let mut out = Vec::with_capacity(23 + set.len() * (set.dims.len() * 4 + 16));
    out.extend_from_slice(FMAP_MAGIC);
    bin::put_u16(&mut out, FMAP_VERSION);
    out.push(set.backbone.tag());
    for (v, what) in [(set.dims.c, "c"), (set.dims.h, "h"), (set.dims.w, "w")] {
        bin::put_u32(&mut out, bin::to_u32(v, what, KIND)?);
    }
    bin::put_u32(&mut out, bin::to_u32(set.len(), "count", KIND)?);
    for r in set.records() {
        bin::put_string(&mut out, &r.id, KIND)?;
        bin::put_f32s(&mut out, &r.data);
    }
    Ok(out)
}

/// Named backbones have fixed map dims; `custom` accepts any.
fn check_backbone_dims(backbone: Backbone, dims: MapDims) -> Result<()> {
    match backbone.feature_dims() {
        Some(expected) if expected != dims => Err(Error::format(
            KIND,
            format!("{backbone} feature maps must be {expected}, header says {dims}"),
        )),
        _ => Ok(()),
    }
}

pub fn read_fmap_bytes(bytes: &[u8]) -> Result<FeatureMapSet> {
    let mut r = ByteReader::new(KIND, bytes);
    r.magic(FMAP_MAGIC)?;
    let version = r.u16("version")?;
    if version != FMAP_VERSION {
        return Err(Error::format(
            KIND,
            format!("unsupported version {version}, expected {FMAP_VERSION}"),
        ));
    }
    let tag = r.u8("backbone tag")?;
    let backbone = Backbone::from_tag(tag)
        .ok_or_else(|| Error::format(KIND, format!("unknown backbone tag {tag}")))?;
    let dims = MapDims::new(
        r.u32("c")? as usize,
        r.u32("h")? as usize,
        r.u32("w")? as usize,
    );
    if dims.is_empty() {
        return Err(Error::format(KIND, format!("header dims {dims} must be positive")));
    }
    check_backbone_dims(backbone, dims)?;
    let count = r.u32("count")? as usize;
    let mut set = FeatureMapSet::new(backbone, dims);
    for i in 0..count {
        let id = r.string(&format!("id of record {i}"))?;
        let data = r.f32s(dims.len(), &format!("payload of record {i} ({id:?})"))?;
        set.push(id, data)
            .map_err(|e| Error::format(r.kind(), format!("record {i}: {e}")))?;
    }
    r.finish()?;
    Ok(set)
}

pub fn write_fmap(path: impl AsRef<Path>, set: &FeatureMapSet) -> Result<()> {
    bin::write_file(path.as_ref(), &write_fmap_bytes(set)?)
}

pub fn read_fmap(path: impl AsRef<Path>) -> Result<FeatureMapSet> {
    read_fmap_bytes(&bin::read_file(path.as_ref())?)
}
