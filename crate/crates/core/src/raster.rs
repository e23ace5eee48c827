//! Pixel grids shared by every stage: the rendered color raster, the facet-id
//! raster and the void mask.

use std::path::Path;

use image::{GrayImage, RgbImage};

/// Color written into pixels that no facet covers.
pub const SENTINEL_COLOR: [u8; 3] = [0, 0, 0];

/// Facet-id value for pixels without geometry.
pub const NO_FACET: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn max_dim(&self) -> usize {
        self.width.max(self.height)
    }
}

/// Rendered 8-bit RGB raster with a per-pixel coverage flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorRaster {
    dims: Dims,
    pixels: Vec<[u8; 3]>,
    valid: Vec<bool>,
}

impl ColorRaster {
    /// All-invalid raster filled with the sentinel color.
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            pixels: vec![SENTINEL_COLOR; dims.len()],
            valid: vec![false; dims.len()],
        }
    }

    /// Fully valid raster from raw pixels.
    pub fn from_pixels(dims: Dims, pixels: Vec<[u8; 3]>) -> Self {
        assert_eq!(pixels.len(), dims.len(), "pixel buffer does not match dims");
        Self {
            dims,
            pixels,
            valid: vec![true; dims.len()],
        }
    }

    pub fn from_parts(dims: Dims, pixels: Vec<[u8; 3]>, valid: Vec<bool>) -> Self {
        assert_eq!(pixels.len(), dims.len());
        assert_eq!(valid.len(), dims.len());
        Self { dims, pixels, valid }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(dims.len());
        for y in 0..dims.height {
            for x in 0..dims.width {
                pixels.push(f(x, y));
            }
        }
        Self::from_pixels(dims, pixels)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[self.dims.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, color: [u8; 3]) {
        let i = self.dims.index(x, y);
        self.pixels[i] = color;
        self.valid[i] = true;
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[self.dims.index(x, y)]
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [[u8; 3]] {
        &mut self.pixels
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn to_image(&self) -> RgbImage {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        RgbImage::from_raw(self.dims.width as u32, self.dims.height as u32, raw)
            .expect("buffer size matches dims")
    }

    /// Every pixel of a loaded image is treated as valid.
    pub fn from_image(img: &RgbImage) -> Self {
        let dims = Dims::new(img.width() as usize, img.height() as usize);
        let pixels = img.pixels().map(|p| p.0).collect();
        Self::from_pixels(dims, pixels)
    }

    pub fn save_png(&self, path: &Path) -> image::ImageResult<()> {
        self.to_image().save_with_format(path, image::ImageFormat::Png)
    }

    pub fn load(path: &Path) -> image::ImageResult<Self> {
        Ok(Self::from_image(&image::open(path)?.to_rgb8()))
    }
}

/// Per-pixel facet index; `NO_FACET` where nothing was rendered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FacetRaster {
    dims: Dims,
    ids: Vec<u32>,
}

impl FacetRaster {
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            ids: vec![NO_FACET; dims.len()],
        }
    }

    pub fn from_ids(dims: Dims, ids: Vec<u32>) -> Self {
        assert_eq!(ids.len(), dims.len());
        Self { dims, ids }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<u32> {
        match self.ids[self.dims.index(x, y)] {
            NO_FACET => None,
            f => Some(f),
        }
    }

    pub fn raw(&self) -> &[u32] {
        &self.ids
    }

    pub fn covered_count(&self) -> usize {
        self.ids.iter().filter(|f| **f != NO_FACET).count()
    }
}

/// Void raster: `true` marks a pixel that has to be completed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskRaster {
    dims: Dims,
    void: Vec<bool>,
}

impl MaskRaster {
    pub fn empty(dims: Dims) -> Self {
        Self {
            dims,
            void: vec![false; dims.len()],
        }
    }

    pub fn from_bits(dims: Dims, void: Vec<bool>) -> Self {
        assert_eq!(void.len(), dims.len());
        Self { dims, void }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut void = Vec::with_capacity(dims.len());
        for y in 0..dims.height {
            for x in 0..dims.width {
                void.push(f(x, y));
            }
        }
        Self { dims, void }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn is_void(&self, x: usize, y: usize) -> bool {
        self.void[self.dims.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, void: bool) {
        let i = self.dims.index(x, y);
        self.void[i] = void;
    }

    pub fn bits(&self) -> &[bool] {
        &self.void
    }

    pub fn void_count(&self) -> usize {
        self.void.iter().filter(|v| **v).count()
    }

    pub fn known_count(&self) -> usize {
        self.dims.len() - self.void_count()
    }

    /// Inclusive pixel bounds `(x0, y0, x1, y1)` of the void region.
    pub fn void_bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.dims.height {
            for x in 0..self.dims.width {
                if self.is_void(x, y) {
                    bounds = Some(match bounds {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bounds
    }

    pub fn to_image(&self) -> GrayImage {
        let raw = self.void.iter().map(|v| if *v { 255 } else { 0 }).collect();
        GrayImage::from_raw(self.dims.width as u32, self.dims.height as u32, raw)
            .expect("buffer size matches dims")
    }
}
