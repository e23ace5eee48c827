//! Default keypoint backend: scale-normalized determinant-of-Hessian blobs
//! with gradient-histogram descriptors rotated into the dominant orientation.

use std::f64::consts::PI;

use crate::raster::{ColorRaster, MaskRaster};

use super::edges::luma601;

/// Keypoint in pixel coordinates (origin at the top-left pixel corner).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    pub response: f64,
    pub orientation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub keypoint: Keypoint,
    pub descriptor: Vec<f32>,
}

/// Source of keypoints and descriptors for self-matching.
pub trait FeatureBackend {
    /// Features of `raster`; keypoints inside the void mask must be dropped.
    fn extract(&self, raster: &ColorRaster, mask: &MaskRaster) -> Vec<Feature>;
}

/// Multi-scale Hessian blob detector.
#[derive(Debug, Clone)]
pub struct BlobBackend {
    pub base_sigma: f64,
    pub scales: usize,
    /// Minimum scale-normalized Hessian determinant (intensities in [0, 1]).
    pub threshold: f64,
    /// Strongest keypoints kept.
    pub max_features: usize,
}

impl Default for BlobBackend {
    fn default() -> Self {
        Self {
            base_sigma: 1.6,
            scales: 6,
            threshold: 1e-4,
            max_features: 1500,
        }
    }
}

struct Plane {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Plane {
    #[inline]
    fn at(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.data[y * self.w + x]
    }

    fn gradient(&self, x: isize, y: isize) -> (f32, f32) {
        (
            0.5 * (self.at(x + 1, y) - self.at(x - 1, y)),
            0.5 * (self.at(x, y + 1) - self.at(x, y - 1)),
        )
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as i32;
    let mut k: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp() as f32)
        .collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with clamped borders.
fn blur(src: &Plane, sigma: f64) -> Plane {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (src.w, src.h);
    let mut tmp = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * src.at(x as isize + i as isize - r, y as isize);
            }
            tmp[y * w + x] = acc;
        }
    }
    let tmp = Plane { w, h, data: tmp };
    let mut out = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp.at(x as isize, y as isize + i as isize - r);
            }
            out[y * w + x] = acc;
        }
    }
    Plane { w, h, data: out }
}

fn hessian_response(l: &Plane, sigma: f64) -> Vec<f32> {
    let norm = (sigma * sigma * sigma * sigma) as f32;
    let mut out = vec![0f32; l.w * l.h];
    for y in 0..l.h as isize {
        for x in 0..l.w as isize {
            let c = l.at(x, y);
            let lxx = l.at(x + 1, y) - 2.0 * c + l.at(x - 1, y);
            let lyy = l.at(x, y + 1) - 2.0 * c + l.at(x, y - 1);
            let lxy = 0.25 * (l.at(x + 1, y + 1) - l.at(x + 1, y - 1) - l.at(x - 1, y + 1) + l.at(x - 1, y - 1));
            out[y as usize * l.w + x as usize] = norm * (lxx * lyy - lxy * lxy);
        }
    }
    out
}

fn dominant_orientation(l: &Plane, x: f64, y: f64, sigma: f64) -> f64 {
    const BINS: usize = 36;
    let s = 1.5 * sigma;
    let radius = (3.0 * s).round() as isize;
    let (cx, cy) = (x.floor() as isize, y.floor() as isize);
    let mut hist = [0f64; BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (gx, gy) = l.gradient(cx + dx, cy + dy);
            let mag = ((gx * gx + gy * gy) as f64).sqrt();
            if mag == 0.0 {
                continue;
            }
            let wgt = (-((dx * dx + dy * dy) as f64) / (2.0 * s * s)).exp();
            let ang = (gy as f64).atan2(gx as f64).rem_euclid(2.0 * PI);
            let bin = ((ang / (2.0 * PI) * BINS as f64) as usize).min(BINS - 1);
            hist[bin] += wgt * mag;
        }
    }
    let smooth: Vec<f64> = (0..BINS)
        .map(|i| 0.25 * hist[(i + BINS - 1) % BINS] + 0.5 * hist[i] + 0.25 * hist[(i + 1) % BINS])
        .collect();
    let (best, peak) = smooth
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
    if peak <= 0.0 {
        return 0.0;
    }
    let l_ = smooth[(best + BINS - 1) % BINS];
    let r_ = smooth[(best + 1) % BINS];
    let denom = l_ - 2.0 * peak + r_;
    let shift = if denom.abs() > 1e-12 { 0.5 * (l_ - r_) / denom } else { 0.0 };
    ((best as f64 + 0.5 + shift) / BINS as f64 * 2.0 * PI).rem_euclid(2.0 * PI)
}

fn describe(l: &Plane, kp: &Keypoint) -> Vec<f32> {
    const GRID: usize = 4;
    const ORI: usize = 8;
    let cell = 3.0 * kp.scale;
    let radius = (cell * std::f64::consts::SQRT_2 * (GRID as f64 + 1.0) * 0.5).round() as isize;
    let (sin_t, cos_t) = kp.orientation.sin_cos();
    let (cx, cy) = (kp.x.floor() as isize, kp.y.floor() as isize);
    let mut hist = vec![0f64; GRID * GRID * ORI];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let rx = (cos_t * dx as f64 + sin_t * dy as f64) / cell;
            let ry = (-sin_t * dx as f64 + cos_t * dy as f64) / cell;
            let bx = rx + GRID as f64 / 2.0 - 0.5;
            let by = ry + GRID as f64 / 2.0 - 0.5;
            if bx <= -1.0 || bx >= GRID as f64 || by <= -1.0 || by >= GRID as f64 {
                continue;
            }
            let (gx, gy) = l.gradient(cx + dx, cy + dy);
            let mag = ((gx * gx + gy * gy) as f64).sqrt();
            if mag == 0.0 {
                continue;
            }
            let wgt = (-(rx * rx + ry * ry) / (2.0 * (GRID as f64 / 2.0).powi(2))).exp() * mag;
            let ang = ((gy as f64).atan2(gx as f64) - kp.orientation).rem_euclid(2.0 * PI);
            let bo = ang / (2.0 * PI) * ORI as f64;
            let (x0, y0, o0) = (bx.floor(), by.floor(), bo.floor());
            let (fx, fy, fo) = (bx - x0, by - y0, bo - o0);
            for (ix, wx) in [(x0 as isize, 1.0 - fx), (x0 as isize + 1, fx)] {
                if ix < 0 || ix >= GRID as isize {
                    continue;
                }
                for (iy, wy) in [(y0 as isize, 1.0 - fy), (y0 as isize + 1, fy)] {
                    if iy < 0 || iy >= GRID as isize {
                        continue;
                    }
                    for (io, wo) in [(o0 as usize % ORI, 1.0 - fo), ((o0 as usize + 1) % ORI, fo)] {
                        hist[(iy as usize * GRID + ix as usize) * ORI + io] += wgt * wx * wy * wo;
                    }
                }
            }
        }
    }
    let normalize = |h: &mut Vec<f64>| {
        let n = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            h.iter_mut().for_each(|v| *v /= n);
        }
    };
    normalize(&mut hist);
    hist.iter_mut().for_each(|v| *v = v.min(0.2));
    normalize(&mut hist);
    hist.into_iter().map(|v| v as f32).collect()
}

impl BlobBackend {
    pub fn detect(&self, raster: &ColorRaster, mask: &MaskRaster) -> Vec<Feature> {
        let dims = raster.dims();
        if dims.width < 3 || dims.height < 3 || self.scales < 3 {
            return vec![];
        }
        let gray = Plane {
            w: dims.width,
            h: dims.height,
            data: raster.pixels().iter().map(|c| luma601(*c) as f32 / 255.0).collect(),
        };
        let sigmas: Vec<f64> = (0..self.scales)
            .map(|k| self.base_sigma * std::f64::consts::SQRT_2.powi(k as i32))
            .collect();
        let smoothed: Vec<Plane> = sigmas.iter().map(|s| blur(&gray, *s)).collect();
        let responses: Vec<Vec<f32>> = smoothed
            .iter()
            .zip(&sigmas)
            .map(|(l, s)| hessian_response(l, *s))
            .collect();

        let (w, h) = (dims.width, dims.height);
        let mut candidates: Vec<(usize, Keypoint)> = Vec::new();
        for k in 1..self.scales - 1 {
            let r = &responses[k];
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let v = r[y * w + x];
                    if (v as f64) < self.threshold {
                        continue;
                    }
                    if mask.is_void(x, y) || !raster.is_valid(x, y) {
                        continue;
                    }
                    let is_max = (k - 1..=k + 1).all(|kk| {
                        (y - 1..=y + 1).all(|yy| {
                            (x - 1..=x + 1).all(|xx| (kk == k && xx == x && yy == y) || responses[kk][yy * w + xx] < v)
                        })
                    });
                    if !is_max {
                        continue;
                    }
                    let refine = |a: f32, b: f32| {
                        let denom = a - 2.0 * v + b;
                        if denom.abs() > 1e-12 {
                            (0.5 * (a - b) / denom).clamp(-0.5, 0.5) as f64
                        } else {
                            0.0
                        }
                    };
                    let ox = refine(r[y * w + x - 1], r[y * w + x + 1]);
                    let oy = refine(r[(y - 1) * w + x], r[(y + 1) * w + x]);
                    candidates.push((
                        k,
                        Keypoint {
                            x: x as f64 + 0.5 + ox,
                            y: y as f64 + 0.5 + oy,
                            scale: sigmas[k],
                            response: v as f64,
                            orientation: 0.0,
                        },
                    ));
                }
            }
        }
        // Strongest first; position breaks ties deterministically.
        candidates.sort_by(|a, b| {
            b.1.response
                .total_cmp(&a.1.response)
                .then(a.1.y.total_cmp(&b.1.y))
                .then(a.1.x.total_cmp(&b.1.x))
        });
        candidates.truncate(self.max_features);
        candidates
            .into_iter()
            .map(|(k, mut kp)| {
                kp.orientation = dominant_orientation(&smoothed[k], kp.x, kp.y, kp.scale);
                let descriptor = describe(&smoothed[k], &kp);
                Feature { keypoint: kp, descriptor }
            })
            .collect()
    }
}

impl FeatureBackend for BlobBackend {
    fn extract(&self, raster: &ColorRaster, mask: &MaskRaster) -> Vec<Feature> {
        self.detect(raster, mask)
    }
}
