//! Synthetic 2-D traffic world with a ray-casting range-bearing sensor.

mod dataset;
mod mask;
mod scenario;
mod sensor;
mod world;

pub use dataset::{
    generate_dataset, generate_sequence, Dataset, DatasetHeader, Frame, SequenceSample, FORMAT_VERSION, FRAME_PERIOD,
    SEQUENCE_LEN,
};
pub use mask::{dynamic_mask, rasterize_footprint, to_ego_frame};
pub use scenario::{AgentCounts, NoiseBlock, ScenarioConfig, ScenarioKind, SensorBlock};
pub use sensor::{ray_aabb, sense, ScanHit, SensorConfig};
pub use world::{step_world, Aabb, AgentState, Footprint, Shape, SpeedRanges, StaticObstacle, World, V_STATIC};

/// Derives an independent RNG seed from a base seed and two stream keys.
pub fn substream(seed: u64, a: u64, b: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(mix(seed) ^ a) ^ b.rotate_left(32))
}
