//! Vehicle removal for textured photogrammetric road meshes.
//!
//! A road region is rendered top-down into an image, vehicles are masked out,
//! the holes are filled by structure-aware PatchMatch and the filled pixels
//! are written back into the texture atlases. Vehicle geometry is flattened
//! onto the fitted road plane.

pub mod complete;
pub mod eval;
pub mod integrate;
pub mod mask;
pub mod mesh;
pub mod pipeline;
pub mod raster;
pub mod regularity;
pub mod remap;
pub mod seed;

pub use complete::{complete, CompletionParams, NNField, Synthesis};
pub use eval::{evaluate, psnr, ssim, QualityReport};
pub use integrate::{build_projection, rasterize, ProjectionSpec, Roi, UpAxis};
pub use mask::{boxes_to_mask, BoundingBox, BoxFile};
pub use mesh::{load_textured_mesh, save_textured_mesh, TexturedMesh};
pub use pipeline::{run_eval, run_pipeline, PipelineConfig, RunReport};
pub use raster::{ColorRaster, Dims, FacetRaster, MaskRaster};
pub use regularity::{estimate_orientations, prewitt_edges, EdgeMap, OrientationSet};
pub use remap::{build_texel_map, deintegrate, flatten_facets, TexelMap};
