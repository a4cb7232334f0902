//! Synthetic multi-label raster data, manifests and the tensor file format.

mod manifest;
mod synthetic;
mod tensor_file;

pub use manifest::{
    assign_splits, build_dataset, manifest_root, DatasetManifest, ManifestEntry, Sample, Split, SplitRatios, MANIFEST_FILE,
};
pub use synthetic::{generate_scene, ClassStyle, SyntheticSceneConfig, Texture};
pub use tensor_file::{read_tensor, read_tensor_from, write_tensor, write_tensor_to, TENSOR_MAGIC, TENSOR_VERSION};
