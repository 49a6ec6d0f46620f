//! On-disk dataset model: payload formats, trace manifests, frame fusion and
//! dataset statistics.

pub mod formats;
pub mod stats;
pub mod trace;

pub use formats::{
    decode_cloud, decode_labels, encode_cloud, encode_labels, encode_polylines, read_cloud,
    read_labels, read_polylines, write_cloud, write_labels, write_polylines, CLOUD_MAGIC,
    LABELS_MAGIC,
};
pub use stats::{
    dataset_stats, is_challenging, validate_split, AttributeCell, AttributeGroup, AttributeTable,
    Histogram, RareAttribute, SplitFlag, SplitReport, StatsBuilder, StatsReport,
    STRAIGHTNESS_BINS,
};
pub use trace::{
    chain_transform, fuse_frames, load_trace, DatasetAdapter, FrameAnnotations, FrameEntry,
    RoadType, Split, Trace, TraceAttributes, TraceManifest, Traffic, Weather, MANIFEST_FILE,
};
