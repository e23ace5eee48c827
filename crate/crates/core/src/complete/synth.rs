//! Void pixel colors from the offset field.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::canvas::{Canvas, Domain};
use super::energy::PatchWeights;
use super::nnf::NNField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Synthesis {
    /// Gaussian-weighted vote of every overlapping source patch.
    #[default]
    Vote,
    /// Center pixel of the pixel's own source patch.
    Copy,
}

impl std::str::FromStr for Synthesis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vote" => Ok(Self::Vote),
            "copy" => Ok(Self::Copy),
            other => Err(format!("unknown synthesis mode '{other}' (expected vote or copy)")),
        }
    }
}

impl std::fmt::Display for Synthesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Vote => "vote",
            Self::Copy => "copy",
        })
    }
}

/// New canvas whose void pixels are re-synthesized; known pixels are copied
/// unchanged. Votes only read source pixels.
pub fn synthesize(canvas: &Canvas, domain: &Domain, nnf: &NNField, mode: Synthesis, weights: &PatchWeights) -> Canvas {
    let dims = canvas.dims();
    let r = weights.half();
    let void = domain.void_pixels();
    let colors: Vec<Option<[f32; 3]>> = void
        .par_iter()
        .map(|&p| {
            let own = nnf.get(p.0, p.1)?;
            let copy = canvas.get((p.0 as i64 + own[0] as i64) as usize, (p.1 as i64 + own[1] as i64) as usize);
            if mode == Synthesis::Copy {
                return Some(copy);
            }
            let mut acc = [0.0f64; 3];
            let mut wsum = 0.0f64;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (qx, qy) = (p.0 as i64 + dx, p.1 as i64 + dy);
                    if !dims.contains(qx, qy) {
                        continue;
                    }
                    let Some(v) = nnf.get(qx as usize, qy as usize) else {
                        continue;
                    };
                    let (sx, sy) = (p.0 as i64 + v[0] as i64, p.1 as i64 + v[1] as i64);
                    if !domain.is_source(sx, sy) {
                        continue;
                    }
                    let w = weights.weight(dx, dy);
                    let c = canvas.get(sx as usize, sy as usize);
                    for k in 0..3 {
                        acc[k] += w * c[k] as f64;
                    }
                    wsum += w;
                }
            }
            if wsum > 0.0 {
                Some(acc.map(|a| (a / wsum) as f32))
            } else {
                Some(copy)
            }
        })
        .collect();
    let mut out = canvas.clone();
    for (p, c) in void.iter().zip(colors) {
        if let Some(c) = c {
            out.set(p.0, p.1, c);
        }
    }
    out
}

/// Smooth initial guess: inverse squared distance average of the source
/// pixels on the void boundary.
pub fn fill_from_boundary(canvas: &Canvas, domain: &Domain) -> Canvas {
    let dims = canvas.dims();
    let mut boundary = Vec::new();
    for y in 0..dims.height {
        for x in 0..dims.width {
            if !domain.is_source(x as i64, y as i64) {
                continue;
            }
            let touches = (-1i64..=1).any(|dy| {
                (-1i64..=1).any(|dx| {
                    let (qx, qy) = (x as i64 + dx, y as i64 + dy);
                    dims.contains(qx, qy) && domain.is_void(qx as usize, qy as usize)
                })
            });
            if touches {
                boundary.push((x as f64, y as f64, canvas.get(x, y)));
            }
        }
    }
    let mut out = canvas.clone();
    for (x, y) in domain.void_pixels() {
        let color = if boundary.is_empty() {
            domain.to_source.nearest(x, y).map(|(sx, sy)| canvas.get(sx, sy))
        } else {
            let mut acc = [0.0f64; 3];
            let mut wsum = 0.0;
            for (bx, by, c) in &boundary {
                let w = 1.0 / ((bx - x as f64).powi(2) + (by - y as f64).powi(2));
                for k in 0..3 {
                    acc[k] += w * c[k] as f64;
                }
                wsum += w;
            }
            Some(acc.map(|a| (a / wsum) as f32))
        };
        if let Some(c) = color {
            out.set(x, y, c);
        }
    }
    out
}
