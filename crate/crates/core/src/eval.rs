//! Image quality metrics: PSNR over RGB and windowed SSIM on gray levels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{ColorRaster, Dims, MaskRaster};

/// Reported PSNR for identical inputs.
pub const PSNR_CAP_DB: f64 = 99.0;
const SSIM_RADIUS: i64 = 5;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const L: f64 = 255.0;

pub const CSV_HEADER: &str = "dataset,method,psnr,ssim";

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("images differ in size: {a:?} vs {b:?}")]
    DimensionMismatch { a: Dims, b: Dims },
    #[error("evaluation region is empty")]
    EmptyRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Full,
    Mask,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub region: Region,
    pub pixels: usize,
}

impl QualityReport {
    pub fn csv_row(&self, dataset: &str, method: &str) -> String {
        format!("{},{},{:.4},{:.6}", csv_field(dataset), csv_field(method), self.psnr_db, self.ssim)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn check(a: &ColorRaster, b: &ColorRaster, region: Option<&MaskRaster>) -> Result<Vec<bool>, EvalError> {
    if a.dims() != b.dims() {
        return Err(EvalError::DimensionMismatch { a: a.dims(), b: b.dims() });
    }
    let sel = match region {
        Some(m) if m.dims() != a.dims() => {
            return Err(EvalError::DimensionMismatch { a: a.dims(), b: m.dims() })
        }
        Some(m) => m.bits().to_vec(),
        None => vec![true; a.dims().len()],
    };
    if !sel.iter().any(|s| *s) {
        return Err(EvalError::EmptyRegion);
    }
    Ok(sel)
}

/// PSNR in dB over the RGB channels of the selected pixels (all when `region`
/// is `None`), capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &ColorRaster, b: &ColorRaster, region: Option<&MaskRaster>) -> Result<f64, EvalError> {
    let sel = check(a, b, region)?;
    let mut sq = 0u64;
    let mut n = 0u64;
    for ((pa, pb), s) in a.pixels().iter().zip(b.pixels()).zip(&sel) {
        if !s {
            continue;
        }
        for k in 0..3 {
            let d = pa[k] as i64 - pb[k] as i64;
            sq += (d * d) as u64;
        }
        n += 3;
    }
    if sq == 0 {
        return Ok(PSNR_CAP_DB);
    }
    let mse = sq as f64 / n as f64;
    Ok((10.0 * (L * L / mse).log10()).min(PSNR_CAP_DB))
}

fn gray(r: &ColorRaster) -> Vec<f64> {
    r.pixels()
        .iter()
        .map(|c| 0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64)
        .collect()
}

/// Mean SSIM over windows centered on the selected pixels. Windows are
/// clipped at the image border and their weights renormalized.
pub fn ssim(a: &ColorRaster, b: &ColorRaster, region: Option<&MaskRaster>) -> Result<f64, EvalError> {
    let sel = check(a, b, region)?;
    let dims = a.dims();
    let (ga, gb) = (gray(a), gray(b));
    let kernel: Vec<f64> = (-SSIM_RADIUS..=SSIM_RADIUS)
        .map(|i| (-((i * i) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let c1 = (K1 * L).powi(2);
    let c2 = (K2 * L).powi(2);
    let (w, h) = (dims.width as i64, dims.height as i64);
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..h {
        for x in 0..w {
            if !sel[dims.index(x as usize, y as usize)] {
                continue;
            }
            let (mut sw, mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in -SSIM_RADIUS..=SSIM_RADIUS {
                let yy = y + dy;
                if yy < 0 || yy >= h {
                    continue;
                }
                for dx in -SSIM_RADIUS..=SSIM_RADIUS {
                    let xx = x + dx;
                    if xx < 0 || xx >= w {
                        continue;
                    }
                    let k = kernel[(dy + SSIM_RADIUS) as usize] * kernel[(dx + SSIM_RADIUS) as usize];
                    let i = (yy * w + xx) as usize;
                    let (va, vb) = (ga[i], gb[i]);
                    sw += k;
                    ma += k * va;
                    mb += k * vb;
                    saa += k * va * va;
                    sbb += k * vb * vb;
                    sab += k * va * vb;
                }
            }
            let (ma, mb) = (ma / sw, mb / sw);
            let va = saa / sw - ma * ma;
            let vb = sbb / sw - mb * mb;
            let cov = sab / sw - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Both metrics over the full image or, with a mask, over its void pixels.
pub fn evaluate(a: &ColorRaster, b: &ColorRaster, region: Option<&MaskRaster>) -> Result<QualityReport, EvalError> {
    let pixels = match region {
        Some(m) => m.void_count(),
        None => a.dims().len(),
    };
    Ok(QualityReport {
        psnr_db: psnr(a, b, region)?,
        ssim: ssim(a, b, region)?,
        region: if region.is_some() { Region::Mask } else { Region::Full },
        pixels,
    })
}
