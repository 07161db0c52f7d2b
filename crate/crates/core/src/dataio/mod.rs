//! Images, manifests and checkpoints on disk.

mod checkpoint;
mod manifest;
mod pgm;
mod resize;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, SavedModel, MAGIC};
pub use manifest::{load_manifest, parse_manifest, split_dataset, Manifest, ManifestEntry, Split};
pub use pgm::{decode_pgm, encode_pgm, load_image, save_image};
pub use resize::{resize, resize_to_64, SIDE};

use std::path::PathBuf;

use crate::error::Result;
use crate::tensor::Tensor;

/// Load each image and bring it to 64×64.
pub fn load_images(paths: &[PathBuf]) -> Result<Vec<Tensor>> {
    paths.iter().map(|p| resize_to_64(&load_image(p)?)).collect()
}
