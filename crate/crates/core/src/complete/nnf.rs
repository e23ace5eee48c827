//! Nearest-neighbor field: one source offset per void pixel.

use rand::Rng;

use super::canvas::Domain;
use crate::raster::Dims;

const INIT_TRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NNField {
    dims: Dims,
    offsets: Vec<Option<[i32; 2]>>,
}

impl NNField {
    pub fn empty(dims: Dims) -> Self {
        Self {
            dims,
            offsets: vec![None; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<[i32; 2]> {
        self.offsets[y * self.dims.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: [i32; 2]) {
        let w = self.dims.width;
        self.offsets[y * w + x] = Some(v);
    }

    /// Whether `v` at `p` lands on a source pixel.
    #[inline]
    pub fn offset_ok(domain: &Domain, p: (usize, usize), v: [i32; 2]) -> bool {
        domain.is_source(p.0 as i64 + v[0] as i64, p.1 as i64 + v[1] as i64)
    }

    /// Void pixels whose offset is missing or does not land on a source.
    pub fn invalid_count(&self, domain: &Domain) -> usize {
        domain
            .void_pixels()
            .into_iter()
            .filter(|&p| match self.get(p.0, p.1) {
                Some(v) => !Self::offset_ok(domain, p, v),
                None => true,
            })
            .count()
    }

    /// Offset to a random source, falling back to the nearest one.
    pub fn random_offset<R: Rng + ?Sized>(domain: &Domain, p: (usize, usize), rng: &mut R) -> Option<[i32; 2]> {
        let dims = domain.dims();
        for _ in 0..INIT_TRIES {
            let x = rng.random_range(0..dims.width);
            let y = rng.random_range(0..dims.height);
            if domain.is_source(x as i64, y as i64) {
                return Some([x as i32 - p.0 as i32, y as i32 - p.1 as i32]);
            }
        }
        let (x, y) = domain.to_source.nearest(p.0, p.1)?;
        Some([x as i32 - p.0 as i32, y as i32 - p.1 as i32])
    }

    pub fn random<R: Rng + ?Sized>(domain: &Domain, rng: &mut R) -> Self {
        let mut f = Self::empty(domain.dims());
        for p in domain.void_pixels() {
            if let Some(v) = Self::random_offset(domain, p, rng) {
                f.set(p.0, p.1, v);
            }
        }
        f
    }

    /// Doubles the offsets onto the next finer level; children whose doubled
    /// offset misses a source are re-drawn.
    pub fn upsample<R: Rng + ?Sized>(&self, fine: &Domain, rng: &mut R) -> Self {
        let mut out = Self::empty(fine.dims());
        for p in fine.void_pixels() {
            let (cx, cy) = (
                (p.0 / 2).min(self.dims.width - 1),
                (p.1 / 2).min(self.dims.height - 1),
            );
            let doubled = self.get(cx, cy).map(|v| [2 * v[0], 2 * v[1]]);
            let v = match doubled {
                Some(v) if Self::offset_ok(fine, p, v) => Some(v),
                _ => Self::random_offset(fine, p, rng),
            };
            if let Some(v) = v {
                out.set(p.0, p.1, v);
            }
        }
        out
    }

    /// Offset field as a picture: hue is the offset direction, saturation
    /// its length relative to the image size. Known pixels are black.
    pub fn to_image(&self) -> image::RgbImage {
        let max = self.dims.max_dim().max(1) as f64;
        image::RgbImage::from_fn(self.dims.width as u32, self.dims.height as u32, |x, y| {
            match self.get(x as usize, y as usize) {
                Some(v) => {
                    let (vx, vy) = (v[0] as f64, v[1] as f64);
                    let hue = vy.atan2(vx).rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU * 6.0;
                    let sat = (vx.hypot(vy) / max).min(1.0);
                    image::Rgb(hsv_to_rgb(hue, sat))
                }
                None => image::Rgb([0, 0, 0]),
            }
        })
    }
}

/// `hue` in sextants [0, 6), full value.
fn hsv_to_rgb(hue: f64, sat: f64) -> [u8; 3] {
    let f = hue - hue.floor();
    let (p, q, t) = (1.0 - sat, 1.0 - sat * f, 1.0 - sat * (1.0 - f));
    let (r, g, b) = match hue.floor() as i32 % 6 {
        0 => (1.0, t, p),
        1 => (q, 1.0, p),
        2 => (p, 1.0, t),
        3 => (p, q, 1.0),
        4 => (t, p, 1.0),
        _ => (1.0, p, q),
    };
    [r, g, b].map(|c: f64| (c * 255.0).round() as u8)
}
