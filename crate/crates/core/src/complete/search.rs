//! Propagation and direction-guided random search.

use std::f64::consts::TAU;

use rand::Rng;

use super::canvas::Domain;
use super::energy::EnergyModel;
use super::nnf::NNField;
use super::queue::PriorityQueue;
use super::CompletionParams;
use crate::raster::Dims;

/// One raw draw of the guided search, before validity filtering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSample {
    pub x: i64,
    pub y: i64,
    /// Band direction used for this draw.
    pub angle: f64,
    pub radius: f64,
}

/// Radii `max(w, h) * 0.5^r` for `r = 1, 2, ...` while at least one pixel.
pub fn search_radii(dims: Dims) -> Vec<f64> {
    let m = dims.max_dim() as f64;
    (1..)
        .map(|r| m * 0.5f64.powi(r))
        .take_while(|r| *r >= 1.0)
        .collect()
}

/// One draw per radius inside a band of half-width `patch_size` around a
/// line through `p`. The line follows a random guidance direction, or a
/// uniform random direction when there is no guidance.
pub fn sample_band<R: Rng + ?Sized>(
    p: (usize, usize),
    dims: Dims,
    theta: &[f64],
    params: &CompletionParams,
    rng: &mut R,
) -> Vec<BandSample> {
    let band = params.patch_size as f64;
    let guided = params.directional_guidance && !theta.is_empty();
    search_radii(dims)
        .into_iter()
        .map(|radius| {
            let angle = if guided {
                theta[rng.random_range(0..theta.len())]
            } else {
                rng.random_range(0.0..TAU)
            };
            let t = rng.random_range(-radius..=radius);
            let s = rng.random_range(-band..=band);
            let (sin, cos) = angle.sin_cos();
            BandSample {
                x: (p.0 as f64 + t * cos - s * sin).round() as i64,
                y: (p.1 as f64 + t * sin + s * cos).round() as i64,
                angle,
                radius,
            }
        })
        .collect()
}

/// Candidate source positions for `p`: band draws that land on a source.
pub fn guided_random_candidates<R: Rng + ?Sized>(
    p: (usize, usize),
    domain: &Domain,
    theta: &[f64],
    params: &CompletionParams,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    sample_band(p, domain.dims(), theta, params, rng)
        .into_iter()
        .filter(|s| domain.is_source(s.x, s.y))
        .map(|s| (s.x as usize, s.y as usize))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PassStats {
    pub visited: usize,
    pub evaluated: usize,
    pub adopted: usize,
    /// Pixels whose energy rose over the pass (must stay zero).
    pub violations: usize,
    pub energy_before: f64,
    pub energy_after: f64,
}

/// One pass over the queue: each pixel tries its neighbors' offsets, then
/// the guided random candidates, and keeps only strict improvements.
pub fn patchmatch_pass<R: Rng + ?Sized>(
    nnf: &mut NNField,
    model: &EnergyModel<'_>,
    queue: &PriorityQueue,
    rng: &mut R,
) -> PassStats {
    let domain = model.domain;
    let dims = domain.dims();
    let mut stats = PassStats::default();
    let mut start = Vec::with_capacity(queue.len());
    for &p in &queue.order {
        let Some(mut cur) = nnf.get(p.0, p.1) else {
            start.push(f64::INFINITY);
            continue;
        };
        let mut e_cur = model.energy(p, cur).total;
        start.push(e_cur);
        stats.visited += 1;
        stats.energy_before += e_cur;

        let consider = |v: [i32; 2], cur: &mut [i32; 2], e_cur: &mut f64, stats: &mut PassStats| {
            if v == *cur || !NNField::offset_ok(domain, p, v) {
                return;
            }
            stats.evaluated += 1;
            if let Some(e) = model.total_below(p, v, *e_cur) {
                *cur = v;
                *e_cur = e;
                stats.adopted += 1;
            }
        };

        let (x, y) = (p.0 as i64, p.1 as i64);
        for (qx, qy) in [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)] {
            if !dims.contains(qx, qy) {
                continue;
            }
            if let Some(v) = nnf.get(qx as usize, qy as usize) {
                consider(v, &mut cur, &mut e_cur, &mut stats);
            }
        }
        for c in guided_random_candidates(p, domain, model.theta, model.params, rng) {
            let v = [c.0 as i32 - p.0 as i32, c.1 as i32 - p.1 as i32];
            consider(v, &mut cur, &mut e_cur, &mut stats);
        }
        nnf.set(p.0, p.1, cur);
    }
    for (&p, e0) in queue.order.iter().zip(&start) {
        if let Some(v) = nnf.get(p.0, p.1) {
            let e = model.energy(p, v).total;
            stats.energy_after += e;
            if e > *e0 {
                stats.violations += 1;
            }
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn radii_halve_down_to_one_pixel() {
        let r = search_radii(Dims::new(512, 300));
        assert_eq!(r.len(), 9);
        assert_eq!(r[0], 256.0);
        assert_eq!(*r.last().unwrap(), 1.0);
        assert!(search_radii(Dims::new(1, 1)).is_empty());
    }

    #[test]
    fn guided_draws_stay_in_band() {
        let params = CompletionParams::default();
        let theta = [0.3];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = (256usize, 256usize);
        for _ in 0..200 {
            for s in sample_band(p, Dims::new(512, 512), &theta, &params, &mut rng) {
                assert_eq!(s.angle, 0.3);
                let (dx, dy) = (s.x as f64 - 256.0, s.y as f64 - 256.0);
                let across = -dx * 0.3f64.sin() + dy * 0.3f64.cos();
                let along = dx * 0.3f64.cos() + dy * 0.3f64.sin();
                assert!(across.abs() <= params.patch_size as f64 + 1.0);
                assert!(along.abs() <= s.radius + 1.0);
            }
        }
    }
}
