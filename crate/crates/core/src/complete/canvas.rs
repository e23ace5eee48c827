//! Floating-point working image and the per-level domain (void, usable
//! sources and distance to the known region).

use crate::raster::{ColorRaster, Dims, MaskRaster};

/// RGB image with `f32` channels on the 0..255 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    dims: Dims,
    px: Vec<[f32; 3]>,
}

impl Canvas {
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            px: vec![[0.0; 3]; dims.len()],
        }
    }

    pub fn from_raster(raster: &ColorRaster) -> Self {
        Self {
            dims: raster.dims(),
            px: raster
                .pixels()
                .iter()
                .map(|c| [c[0] as f32, c[1] as f32, c[2] as f32])
                .collect(),
        }
    }

    /// Rounded 8-bit copy; validity is taken from `like` when given.
    pub fn to_raster(&self, like: Option<&ColorRaster>) -> ColorRaster {
        let pixels = self
            .px
            .iter()
            .map(|c| c.map(|v| v.round().clamp(0.0, 255.0) as u8))
            .collect();
        match like {
            Some(r) => ColorRaster::from_parts(self.dims, pixels, r.validity().to_vec()),
            None => ColorRaster::from_pixels(self.dims, pixels),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.px[y * self.dims.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: [f32; 3]) {
        let w = self.dims.width;
        self.px[y * w + x] = c;
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.px
    }
}

/// Euclidean distance (px) to the nearest site, with the site's flat index.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRaster {
    dims: Dims,
    dist: Vec<f64>,
    nearest: Vec<u32>,
}

impl DistanceRaster {
    /// Exact Euclidean distance transform (lower envelope of parabolas, one
    /// pass per axis). Pixels with no site anywhere get infinite distance.
    pub fn from_sites(dims: Dims, sites: &[bool]) -> Self {
        assert_eq!(sites.len(), dims.len());
        const FAR: f64 = 1e20;
        let (w, h) = (dims.width, dims.height);
        // Column pass: squared vertical distance and row of the nearest site.
        let mut col_d = vec![FAR; dims.len()];
        let mut col_row = vec![u32::MAX; dims.len()];
        let mut f = vec![0.0; h];
        for x in 0..w {
            for y in 0..h {
                f[y] = if sites[y * w + x] { 0.0 } else { FAR };
            }
            let (d, arg) = envelope_1d(&f);
            for y in 0..h {
                col_d[y * w + x] = d[y];
                col_row[y * w + x] = arg[y] as u32;
            }
        }
        let mut dist = vec![f64::INFINITY; dims.len()];
        let mut nearest = vec![u32::MAX; dims.len()];
        let mut f = vec![0.0; w];
        for y in 0..h {
            f.copy_from_slice(&col_d[y * w..(y + 1) * w]);
            let (d, arg) = envelope_1d(&f);
            for x in 0..w {
                let q = arg[x];
                let row = col_row[y * w + q];
                if d[x] < FAR / 2.0 && row != u32::MAX {
                    dist[y * w + x] = d[x].sqrt();
                    nearest[y * w + x] = (row as usize * w + q) as u32;
                }
            }
        }
        Self { dims, dist, nearest }
    }

    /// Distance of every pixel to the nearest non-void pixel.
    pub fn to_known(mask: &MaskRaster) -> Self {
        let sites: Vec<bool> = mask.bits().iter().map(|v| !v).collect();
        Self::from_sites(mask.dims(), &sites)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.dist[y * self.dims.width + x]
    }

    /// Coordinates of the nearest site, if any.
    pub fn nearest(&self, x: usize, y: usize) -> Option<(usize, usize)> {
        match self.nearest[y * self.dims.width + x] {
            u32::MAX => None,
            i => Some((i as usize % self.dims.width, i as usize / self.dims.width)),
        }
    }
}

/// `d[p] = min_q (p - q)^2 + f[q]` with its argmin.
fn envelope_1d(f: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = f.len();
    let mut d = vec![0.0; n];
    let mut arg = vec![0usize; n];
    if n == 0 {
        return (d, arg);
    }
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64);
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0: q replaces the first parabola.
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
            }
            break;
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        d[q] = (q as f64 - p as f64).powi(2) + f[p];
        arg[q] = p;
    }
    (d, arg)
}

/// Completion domain at one pyramid level.
#[derive(Debug, Clone)]
pub struct Domain {
    pub void: MaskRaster,
    /// Pixels a source patch may be centered on: known and covered.
    source: Vec<bool>,
    /// Distance to the nearest non-void pixel.
    pub dist: DistanceRaster,
    /// Nearest source pixel, for offset initialization.
    pub to_source: DistanceRaster,
}

impl Domain {
    pub fn new(void: MaskRaster, valid: &[bool]) -> Self {
        assert_eq!(valid.len(), void.dims().len());
        let source: Vec<bool> = void.bits().iter().zip(valid).map(|(v, ok)| !v && *ok).collect();
        Self::with_sources(void, source)
    }

    pub fn with_sources(void: MaskRaster, source: Vec<bool>) -> Self {
        let dims = void.dims();
        let dist = DistanceRaster::to_known(&void);
        let to_source = DistanceRaster::from_sites(dims, &source);
        Self {
            void,
            source,
            dist,
            to_source,
        }
    }

    pub fn dims(&self) -> Dims {
        self.void.dims()
    }

    #[inline]
    pub fn is_void(&self, x: usize, y: usize) -> bool {
        self.void.is_void(x, y)
    }

    #[inline]
    pub fn is_source(&self, x: i64, y: i64) -> bool {
        let d = self.dims();
        d.contains(x, y) && self.source[y as usize * d.width + x as usize]
    }

    pub fn source_bits(&self) -> &[bool] {
        &self.source
    }

    pub fn source_count(&self) -> usize {
        self.source.iter().filter(|s| **s).count()
    }

    /// Void pixels in row-major order.
    pub fn void_pixels(&self) -> Vec<(usize, usize)> {
        let d = self.dims();
        let mut out = Vec::new();
        for y in 0..d.height {
            for x in 0..d.width {
                if self.is_void(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

/// Halves the level: colors are box averages, a coarse pixel is void if any
/// child is void and a source only if every child is a source.
pub fn downsample(canvas: &Canvas, domain: &Domain) -> (Canvas, Domain) {
    let fine = canvas.dims();
    let dims = Dims::new(fine.width.div_ceil(2), fine.height.div_ceil(2));
    let mut out = Canvas::new(dims);
    let mut void = MaskRaster::empty(dims);
    let mut source = vec![false; dims.len()];
    for y in 0..dims.height {
        for x in 0..dims.width {
            let mut sum = [0.0f32; 3];
            let mut n = 0.0f32;
            let mut any_void = false;
            let mut all_source = true;
            for (cx, cy) in [(2 * x, 2 * y), (2 * x + 1, 2 * y), (2 * x, 2 * y + 1), (2 * x + 1, 2 * y + 1)] {
                if cx >= fine.width || cy >= fine.height {
                    continue;
                }
                let c = canvas.get(cx, cy);
                for k in 0..3 {
                    sum[k] += c[k];
                }
                n += 1.0;
                any_void |= domain.is_void(cx, cy);
                all_source &= domain.is_source(cx as i64, cy as i64);
            }
            out.set(x, y, sum.map(|s| s / n));
            void.set(x, y, any_void);
            source[dims.index(x, y)] = all_source && !any_void;
        }
    }
    (out, Domain::with_sources(void, source))
}
