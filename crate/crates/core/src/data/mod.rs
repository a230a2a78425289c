//! On-disk containers and ground-truth construction.
//!
//! All binary integers are little-endian and floats are IEEE-754 binary32
//! little-endian.

pub(crate) mod bin;
mod dvec;
mod fmap;
mod groundtruth;

pub use dvec::{
    read_dvec, read_dvec_bytes, write_dvec, write_dvec_bytes, DescriptorRecord, DescriptorSet,
    DVEC_MAGIC, DVEC_VERSION, FLATTEN_CHANNEL_MAJOR, UNIT_NORM_TOLERANCE,
};
pub use fmap::{
    read_fmap, read_fmap_bytes, write_fmap, write_fmap_bytes, FeatureMapSet, FeatureRecord,
    FMAP_MAGIC, FMAP_VERSION,
};
pub use groundtruth::{
    build_ground_truth_frames, build_ground_truth_radius, frames_for_ids, load_pair_list,
    parse_pair_list, read_manifest, read_pose_table, write_ground_truth, GroundTruth, PairList,
    PoseTable, Protocol,
};
