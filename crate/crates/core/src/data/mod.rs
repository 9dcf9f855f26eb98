//! Synthetic quality-labelled images, manifests, augmentation and dataset statistics.

mod augment;
mod degrade;
mod generate;
mod image;
mod manifest;
mod stats;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use augment::{augment, hflip, resize_eval, rot90, AugmentConfig};
pub use degrade::{degrade, Degradation};
pub use generate::{
    generate_dataset, generate_sample, Generated, ASPECT_MEAN, ASPECT_RANGE, ASPECT_STD, MAX_BASE_WIDTH,
    MIN_BASE_WIDTH,
};
pub use image::{batch_tensor, Image, MIN_SIDE};
pub use manifest::{partition, split_manifest, Dataset, Manifest, Sample, CSV_HEADER, MANIFEST_VERSION};
pub use stats::{dataset_stats, Histogram, StatsReport};

/// Independent random stream for item `index` of a given `purpose`
/// (generation, augmentation, ...) under a run seed.
pub fn stream_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
