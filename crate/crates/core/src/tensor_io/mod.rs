//! Array types, the tensor interchange container, and input file parsers.

pub mod annotations;
pub mod fixations;
pub mod grid;
pub mod manifest;
pub mod npy;

pub use annotations::{parse_annotations, AnnotatedImage, Annotation, MaskSpec};
pub use fixations::{parse_fixations, scale_fixations, Fixation, FixationSet};
pub use grid::{AttentionStack, Grid2D, ROW_SUM_TOLERANCE};
pub use manifest::{ManifestEntry, TensorManifest};
pub use npy::{read_tensor_file, write_tensor_file, ElementType, NpyTensor, TensorData};
