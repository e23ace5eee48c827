//! Binary edge map from 3x3 Prewitt gradients.

use crate::raster::{ColorRaster, Dims, MaskRaster};

pub const DEFAULT_EDGE_THRESHOLD: f64 = 40.0;

/// Binary edge raster; always false inside (and next to) the void region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    dims: Dims,
    edges: Vec<bool>,
}

impl EdgeMap {
    pub fn from_bits(dims: Dims, edges: Vec<bool>) -> Self {
        assert_eq!(edges.len(), dims.len());
        Self { dims, edges }
    }

    pub fn empty(dims: Dims) -> Self {
        Self::from_bits(dims, vec![false; dims.len()])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn is_edge(&self, x: usize, y: usize) -> bool {
        self.edges[self.dims.index(x, y)]
    }

    pub fn bits(&self) -> &[bool] {
        &self.edges
    }

    pub fn count(&self) -> usize {
        self.edges.iter().filter(|e| **e).count()
    }

    pub fn to_image(&self) -> image::GrayImage {
        let raw = self.edges.iter().map(|e| if *e { 255 } else { 0 }).collect();
        image::GrayImage::from_raw(self.dims.width as u32, self.dims.height as u32, raw)
            .expect("buffer size matches dims")
    }
}

/// Rec. 601 luma in integer arithmetic, rounded to the nearest gray level.
#[inline]
pub fn luma601(c: [u8; 3]) -> i32 {
    (299 * c[0] as i32 + 587 * c[1] as i32 + 114 * c[2] as i32 + 500) / 1000
}

/// Prewitt responses `(gx, gy)` at an interior pixel of a gray image.
#[inline]
fn prewitt_at(gray: &[i32], w: usize, x: usize, y: usize) -> (i32, i32) {
    let g = |dx: isize, dy: isize| gray[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
    let gx = (g(1, -1) + g(1, 0) + g(1, 1)) - (g(-1, -1) + g(-1, 0) + g(-1, 1));
    let gy = (g(-1, 1) + g(0, 1) + g(1, 1)) - (g(-1, -1) + g(0, -1) + g(1, -1));
    (gx, gy)
}

/// Prewitt gradient magnitude per pixel (zero on the border).
pub fn prewitt_magnitude(raster: &ColorRaster) -> Vec<f64> {
    let dims = raster.dims();
    let gray: Vec<i32> = raster.pixels().iter().map(|c| luma601(*c)).collect();
    let mut mag = vec![0.0; dims.len()];
    if dims.width < 3 || dims.height < 3 {
        return mag;
    }
    for y in 1..dims.height - 1 {
        for x in 1..dims.width - 1 {
            let (gx, gy) = prewitt_at(&gray, dims.width, x, y);
            mag[dims.index(x, y)] = ((gx * gx + gy * gy) as f64).sqrt();
        }
    }
    mag
}

/// Thresholded Prewitt edges. Border pixels and pixels whose 3x3 support
/// touches the void mask are never edges.
pub fn prewitt_edges(raster: &ColorRaster, mask: &MaskRaster, threshold: f64) -> EdgeMap {
    let dims = raster.dims();
    assert_eq!(dims, mask.dims(), "mask and raster dimensions differ");
    let mag = prewitt_magnitude(raster);
    let mut edges = vec![false; dims.len()];
    if dims.width < 3 || dims.height < 3 {
        return EdgeMap::from_bits(dims, edges);
    }
    for y in 1..dims.height - 1 {
        for x in 1..dims.width - 1 {
            let near_void = (y - 1..=y + 1).any(|yy| (x - 1..=x + 1).any(|xx| mask.is_void(xx, yy)));
            if near_void {
                continue;
            }
            let i = dims.index(x, y);
            edges[i] = mag[i] >= threshold;
        }
    }
    EdgeMap::from_bits(dims, edges)
}
