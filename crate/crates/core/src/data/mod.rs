//! Dataset manifests, image preprocessing, ground-truth loading and a
//! procedural synthetic corpus.

mod ground_truth;
mod manifest;
mod preprocess;
pub mod synthetic;

pub use ground_truth::load_gt_cloud;
pub use manifest::{build_manifest, DatasetManifest, ManifestOptions, ManifestRecord, SourceKind, Split, MANIFEST_FORMAT};
pub use preprocess::{composite, load_rgb, preprocess_image, to_input, PreprocessSpec};
pub use synthetic::{generate_synthetic, ShapeKind, SyntheticSpec, SyntheticSummary};
