//! Word images, manifests and the synthetic multi-writer generator.

mod image;
mod manifest;
mod set;
pub mod synth;

pub use self::image::{load_image, resize_pad, resize_pad_values, save_image, GrayImage};
pub use manifest::{check_disjoint, load_manifest, load_split, parse_manifest, Manifest, ManifestRecord, Split};
pub use set::WordSet;
