//! Per-pixel completion energy: appearance + proximity + regularity.

use super::canvas::{Canvas, Domain};
use super::{CompletionParams, RegularityCost};

/// Gaussian patch weights with a summed-area table for clipped footprints.
#[derive(Debug, Clone)]
pub struct PatchWeights {
    half: i64,
    size: usize,
    w: Vec<f64>,
    sat: Vec<f64>,
}

impl PatchWeights {
    pub fn new(patch_size: usize, sigma: f64) -> Self {
        assert!(patch_size % 2 == 1, "patch size must be odd");
        let half = (patch_size / 2) as i64;
        let size = patch_size;
        let mut w = vec![0.0; size * size];
        for dy in -half..=half {
            for dx in -half..=half {
                w[((dy + half) as usize) * size + (dx + half) as usize] =
                    (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            }
        }
        let s = size + 1;
        let mut sat = vec![0.0; s * s];
        for y in 0..size {
            for x in 0..size {
                sat[(y + 1) * s + x + 1] = w[y * size + x] + sat[y * s + x + 1] + sat[(y + 1) * s + x] - sat[y * s + x];
            }
        }
        Self { half, size, w, sat }
    }

    pub fn for_params(params: &CompletionParams) -> Self {
        Self::new(params.patch_size, params.sigma_w())
    }

    pub fn half(&self) -> i64 {
        self.half
    }

    #[inline]
    pub fn weight(&self, dx: i64, dy: i64) -> f64 {
        self.w[((dy + self.half) as usize) * self.size + (dx + self.half) as usize]
    }

    /// Sum of weights over `dx in x0..=x1, dy in y0..=y1`.
    #[inline]
    pub fn sum(&self, x0: i64, x1: i64, y0: i64, y1: i64) -> f64 {
        let s = self.size + 1;
        let (a, b) = ((x0 + self.half) as usize, (x1 + self.half + 1) as usize);
        let (c, d) = ((y0 + self.half) as usize, (y1 + self.half + 1) as usize);
        self.sat[d * s + b] - self.sat[c * s + b] - self.sat[d * s + a] + self.sat[c * s + a]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub total: f64,
    pub appearance: f64,
    pub proximity: f64,
    pub regularity: f64,
}

/// Everything needed to score offsets at one level.
pub struct EnergyModel<'a> {
    pub canvas: &'a Canvas,
    pub domain: &'a Domain,
    pub theta: &'a [f64],
    pub params: &'a CompletionParams,
    pub weights: &'a PatchWeights,
    sigma_c2: f64,
}

impl<'a> EnergyModel<'a> {
    pub fn new(
        canvas: &'a Canvas,
        domain: &'a Domain,
        theta: &'a [f64],
        params: &'a CompletionParams,
        weights: &'a PatchWeights,
    ) -> Self {
        let sigma_c = canvas.dims().max_dim() as f64 / 8.0;
        Self {
            canvas,
            domain,
            theta,
            params,
            weights,
            sigma_c2: sigma_c * sigma_c,
        }
    }

    pub fn proximity(&self, p: (usize, usize), v: [i32; 2]) -> f64 {
        let sd = self.domain.dist.get(p.0, p.1);
        let len2 = (v[0] as f64).powi(2) + (v[1] as f64).powi(2);
        len2 / (sd * sd + self.sigma_c2)
    }

    pub fn regularity(&self, v: [i32; 2]) -> f64 {
        regularity_cost(v, self.theta, self.params.regularity_cost)
    }

    /// Weighted mean absolute RGB difference between the patches at `p` and
    /// `p + v`, over the part of the window inside the image for both.
    /// Returns `None` as soon as the result is certain to exceed `bound`.
    pub fn appearance_bounded(&self, p: (usize, usize), v: [i32; 2], bound: f64) -> Option<f64> {
        let dims = self.canvas.dims();
        let (w, h) = (dims.width as i64, dims.height as i64);
        let (px, py) = (p.0 as i64, p.1 as i64);
        let (sx, sy) = (px + v[0] as i64, py + v[1] as i64);
        let r = self.weights.half();
        let x0 = (-r).max(-px).max(-sx);
        let x1 = r.min(w - 1 - px).min(w - 1 - sx);
        let y0 = (-r).max(-py).max(-sy);
        let y1 = r.min(h - 1 - py).min(h - 1 - sy);
        if x0 > x1 || y0 > y1 {
            return None;
        }
        let norm = self.weights.sum(x0, x1, y0, y1);
        let limit = bound * norm;
        let mut acc = 0.0f64;
        for dy in y0..=y1 {
            let mut row = 0.0f64;
            for dx in x0..=x1 {
                let t = self.canvas.get((px + dx) as usize, (py + dy) as usize);
                let s = self.canvas.get((sx + dx) as usize, (sy + dy) as usize);
                let d = (t[0] - s[0]).abs() + (t[1] - s[1]).abs() + (t[2] - s[2]).abs();
                row += self.weights.weight(dx, dy) * d as f64;
            }
            acc += row;
            if acc > limit {
                return None;
            }
        }
        Some(acc / norm)
    }

    pub fn appearance(&self, p: (usize, usize), v: [i32; 2]) -> f64 {
        self.appearance_bounded(p, v, f64::INFINITY).unwrap_or(f64::INFINITY)
    }

    pub fn energy(&self, p: (usize, usize), v: [i32; 2]) -> Energy {
        let appearance = self.appearance(p, v);
        let proximity = self.proximity(p, v);
        let regularity = self.regularity(v);
        Energy {
            // Same association as `total_below`, so both agree to the bit.
            total: appearance + (self.params.lambda1 * proximity + self.params.lambda2 * regularity),
            appearance,
            proximity,
            regularity,
        }
    }

    /// Total energy if it is below `bound`.
    pub fn total_below(&self, p: (usize, usize), v: [i32; 2], bound: f64) -> Option<f64> {
        let cheap = self.params.lambda1 * self.proximity(p, v) + self.params.lambda2 * self.regularity(v);
        if cheap >= bound {
            return None;
        }
        let a = self.appearance_bounded(p, v, bound - cheap)?;
        let total = a + cheap;
        (total < bound).then_some(total)
    }
}

/// Angular misalignment of an offset with the closest guidance direction.
pub fn regularity_cost(v: [i32; 2], theta: &[f64], form: RegularityCost) -> f64 {
    if theta.is_empty() {
        return 0.0;
    }
    let tv = (v[1] as f64).atan2(v[0] as f64);
    theta
        .iter()
        .map(|t| match form {
            RegularityCost::Undirected => 1.0 - (tv - t).cos().abs(),
            RegularityCost::Literal => (tv - t).cos(),
        })
        .fold(f64::INFINITY, f64::min)
}

/// Energy of offset `v` at void pixel `p`.
pub fn energy(
    p: (usize, usize),
    v: [i32; 2],
    canvas: &Canvas,
    domain: &Domain,
    theta: &[f64],
    params: &CompletionParams,
) -> Energy {
    let weights = PatchWeights::for_params(params);
    EnergyModel::new(canvas, domain, theta, params, &weights).energy(p, v)
}
