//! Synthetic 2-D world of moving, occluding objects that emits corrupted
//! slot streams, and the frozen decoder shared by slots and memory.

mod config;
mod dataset;
pub mod decoder;
mod emit;
mod scenario;
mod world;

pub use config::SimConfig;
pub use dataset::{
    file_checksum, generate, generate_dataset, simulate_video, video_rng, Dataset, Manifest, Video,
    VideoEntry,
};
pub use decoder::{BlobParams, Decoded, DecoderSpec};
pub use scenario::{occlusion_scenario, OcclusionScenario};
pub use emit::{emit_slots, encode_object, split_parts, Appearance, SlotFrame};
pub use world::{
    assemble_gt, blob_mask, depth_order, random_objects, render_gt, step_world, visible_masks,
    FrameGt, ObjectGt, WorldObject,
};
