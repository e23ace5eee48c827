//! Visiting order of void pixels within one search pass.

use super::canvas::Domain;
use super::CompletionParams;
use crate::regularity::EdgeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct PriorityQueue {
    /// Void pixels in visiting order.
    pub order: Vec<(usize, usize)>,
    /// Edge count in each pixel's window, aligned with `order`.
    pub scores: Vec<u32>,
}

impl PriorityQueue {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Summed-area table of the edge map, `(w + 1) x (h + 1)`.
fn integral(edges: &EdgeMap) -> Vec<u32> {
    let d = edges.dims();
    let s = d.width + 1;
    let mut sat = vec![0u32; s * (d.height + 1)];
    for y in 0..d.height {
        let mut row = 0u32;
        for x in 0..d.width {
            row += edges.is_edge(x, y) as u32;
            sat[(y + 1) * s + x + 1] = sat[y * s + x + 1] + row;
        }
    }
    sat
}

/// Number of edge pixels in the patch window at each void pixel.
pub fn edge_scores(edges: &EdgeMap, domain: &Domain, patch_size: usize) -> Vec<((usize, usize), u32)> {
    let d = edges.dims();
    assert_eq!(d, domain.dims(), "edge map and domain dimensions differ");
    let sat = integral(edges);
    let s = d.width + 1;
    let r = patch_size / 2;
    domain
        .void_pixels()
        .into_iter()
        .map(|(x, y)| {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(d.width));
            let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(d.height));
            let n = sat[y1 * s + x1] + sat[y0 * s + x0] - sat[y0 * s + x1] - sat[y1 * s + x0];
            ((x, y), n)
        })
        .collect()
}

/// Structure-first order: more edges in the window first, then closer to the
/// known region, then row-major. With linear ordering disabled the void
/// pixels are visited in scanline order, reversed on even passes.
pub fn build_priority_queue(edges: &EdgeMap, domain: &Domain, params: &CompletionParams, pass: usize) -> PriorityQueue {
    let mut scored = edge_scores(edges, domain, params.patch_size);
    if params.linear_ordering {
        scored.sort_by(|a, b| {
            b.1.cmp(&a.1)
                .then(domain.dist.get(a.0 .0, a.0 .1).total_cmp(&domain.dist.get(b.0 .0, b.0 .1)))
                .then(a.0 .1.cmp(&b.0 .1))
                .then(a.0 .0.cmp(&b.0 .0))
        });
    } else if pass.is_multiple_of(2) {
        scored.reverse();
    }
    let (order, scores) = scored.into_iter().unzip();
    PriorityQueue { order, scores }
}
