//! Level-1 image representations: organizer feature pruning, four
//! MPEG-7-style descriptors, gist, and the combined segmented feature vector.

mod color;
mod dct;
mod feature_vector;
mod gist;
mod mpeg7;
mod organizer;
mod raster;

pub use feature_vector::{
    combine_image_features, FeatureVector, Segment, GIST_DIM, MPEG7_DIM, ORGANIZER_DIM,
};
pub use gist::gist;
pub use mpeg7::{
    color_layout, color_structure, edge_histogram, edge_histogram_with_threshold,
    mpeg7_descriptor, scalable_color, DEFAULT_EDGE_THRESHOLD,
};
pub use organizer::{prune_zero_columns, select_columns};
pub use raster::RasterImage;

use crate::error::Result;

/// Full level-1 image vector: organizer (when present) then the four MPEG-7
/// descriptors then gist, with segment layout metadata.
pub fn extract_image_features(
    img: &RasterImage,
    organizer_row: Option<&[f64]>,
) -> Result<FeatureVector> {
    let mpeg7 = mpeg7_descriptor(img)?;
    let g = gist(img)?;
    combine_image_features(organizer_row, &mpeg7, &g)
}
