use super::cae::CaeModel;
use crate::data::{DescriptorSet, FeatureMapSet};
use crate::error::{Error, Result};

/// Encodes every record of `set` in batches of `batch_size`, keeping record
/// order. The output is stamped with the model checksum.
pub fn encode_set(model: &CaeModel, set: &FeatureMapSet, batch_size: usize) -> Result<DescriptorSet> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if set.backbone != model.spec.backbone {
        return Err(Error::Data(format!(
            "feature maps come from the {} backbone, checkpoint was trained on {}",
            set.backbone, model.spec.backbone
        )));
    }
    let mut out = DescriptorSet::new(model.descriptor_len(), model.checksum()?)?;
    let idx: Vec<usize> = (0..set.len()).collect();
    let records = set.records();
    for chunk in idx.chunks(batch_size) {
        let vectors = model.encode(&set.batch(chunk)?)?;
        for (&i, v) in chunk.iter().zip(vectors) {
            out.push(records[i].id.clone(), v)?;
        }
    }
    Ok(out)
}
