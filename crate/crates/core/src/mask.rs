//! Void mask ingestion: detector bounding boxes or a mask image.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Dims, MaskRaster};

/// Default growth of each detected box, as a fraction of its width and height.
pub const DEFAULT_DILATION: f64 = 0.10;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("mask would cover every pixel; nothing is left to copy from")]
    NoKnownPixels,
    #[error("dilation must lie in [0, 1], got {0}")]
    BadDilation(f64),
    #[error("box {index} is malformed or outside the image: {bbox:?}")]
    BadBox { index: usize, bbox: BoundingBox },
    #[error("mask image is {found:?} but the raster is {expected:?}")]
    DimensionMismatch { expected: Dims, found: Dims },
    #[error("mask image must be single-channel")]
    NotSingleChannel,
    #[error("cannot read {path}: {msg}")]
    Read { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    #[serde(rename = "score", default = "one")]
    pub confidence: f64,
    #[serde(default = "vehicle")]
    pub label: String,
}

fn one() -> f64 {
    1.0
}

fn vehicle() -> String {
    "vehicle".into()
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
            confidence: 1.0,
            label: vehicle(),
        }
    }

    /// Box scaled by `1 + dilation` in width and height about its center.
    pub fn dilated(&self, dilation: f64) -> Self {
        let cx = 0.5 * (self.x_min + self.x_max);
        let cy = 0.5 * (self.y_min + self.y_max);
        let hw = 0.5 * (self.x_max - self.x_min) * (1.0 + dilation);
        let hh = 0.5 * (self.y_max - self.y_min) * (1.0 + dilation);
        Self {
            x_min: cx - hw,
            y_min: cy - hh,
            x_max: cx + hw,
            y_max: cy + hh,
            ..self.clone()
        }
    }

    fn is_valid_in(&self, dims: Dims) -> bool {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        finite
            && self.x_min < self.x_max
            && self.y_min < self.y_max
            && (0.0..=1.0).contains(&self.confidence)
            && self.x_max > 0.0
            && self.y_max > 0.0
            && self.x_min < dims.width as f64
            && self.y_min < dims.height as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageHeader {
    pub width: usize,
    pub height: usize,
}

/// Detector output document shared with external detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxFile {
    pub image: ImageHeader,
    pub boxes: Vec<BoundingBox>,
}

impl BoxFile {
    pub fn load(path: &Path) -> Result<Self, MaskError> {
        let read_err = |msg: String| MaskError::Read {
            path: path.display().to_string(),
            msg,
        };
        let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.image.width, self.image.height)
    }
}

/// Rasterizes the dilated boxes: a pixel is void iff its center lies in at
/// least one box (half-open on the max side).
pub fn boxes_to_mask(boxes: &[BoundingBox], dims: Dims, dilation: f64) -> Result<MaskRaster, MaskError> {
    if !(0.0..=1.0).contains(&dilation) {
        return Err(MaskError::BadDilation(dilation));
    }
    let mut mask = MaskRaster::empty(dims);
    for (index, b) in boxes.iter().enumerate() {
        if !b.is_valid_in(dims) {
            return Err(MaskError::BadBox {
                index,
                bbox: b.clone(),
            });
        }
        let d = b.dilated(dilation);
        let x0 = (d.x_min - 0.5).ceil().max(0.0) as usize;
        let y0 = (d.y_min - 0.5).ceil().max(0.0) as usize;
        let x1 = ((d.x_max - 0.5).ceil().max(0.0) as usize).min(dims.width);
        let y1 = ((d.y_max - 0.5).ceil().max(0.0) as usize).min(dims.height);
        for y in y0..y1 {
            for x in x0..x1 {
                mask.set(x, y, true);
            }
        }
    }
    if !dims.is_empty() && mask.known_count() == 0 {
        return Err(MaskError::NoKnownPixels);
    }
    Ok(mask)
}

/// Reads a single-channel mask image; values above 127 are void.
pub fn load_mask(path: &Path, dims: Dims) -> Result<MaskRaster, MaskError> {
    let img = image::open(path).map_err(|e| MaskError::Read {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    if img.color().channel_count() != 1 {
        return Err(MaskError::NotSingleChannel);
    }
    let gray = img.to_luma8();
    let found = Dims::new(gray.width() as usize, gray.height() as usize);
    if found != dims {
        return Err(MaskError::DimensionMismatch { expected: dims, found });
    }
    let mask = MaskRaster::from_bits(dims, gray.pixels().map(|p| p.0[0] > 127).collect());
    if mask.known_count() == 0 {
        return Err(MaskError::NoKnownPixels);
    }
    Ok(mask)
}
