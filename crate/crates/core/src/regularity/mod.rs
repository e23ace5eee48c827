//! Guidance signals for completion: dominant translational directions from
//! self-matched features, and a binary edge map.

pub mod edges;
pub mod features;

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{ColorRaster, MaskRaster};

pub use edges::{prewitt_edges, EdgeMap, DEFAULT_EDGE_THRESHOLD};
pub use features::{BlobBackend, Feature, FeatureBackend, Keypoint};

pub const RATIO_THRESHOLD: f64 = 0.8;
/// Offsets shorter than this are adjacency noise.
pub const MIN_OFFSET_LENGTH: f64 = 8.0;
pub const MIN_MATCHES: usize = 20;
pub const RANSAC_ITERATIONS: usize = 1000;
pub const INLIER_DISTANCE: f64 = 5.0;
/// Fraction of the remaining offsets a line needs to be accepted.
pub const ACCEPT_RATIO: f64 = 0.25;
pub const MAX_LINES: usize = 2;
pub const MIN_SEPARATION: f64 = 10.0 * PI / 180.0;
/// Descriptor distance below which two features are the same structure.
const DUPLICATE_DISTANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum RegularityError {
    #[error("need at least {MIN_MATCHES} offsets for direction estimation, got {0}")]
    TooFewOffsets(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureMatch {
    pub p1: [f64; 2],
    pub p2: [f64; 2],
    /// Best over second-best descriptor distance.
    pub ratio: f64,
}

impl FeatureMatch {
    pub fn offset(&self) -> Offset {
        Offset::new(self.p2[0] - self.p1[0], self.p2[1] - self.p1[1])
    }
}

/// Match displacement folded into the half-plane `dy > 0 || (dy == 0 && dx > 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offset {
    pub dx: f64,
    pub dy: f64,
}

impl Offset {
    pub fn new(dx: f64, dy: f64) -> Self {
        if dy < 0.0 || (dy == 0.0 && dx < 0.0) {
            Self { dx: -dx, dy: -dy }
        } else {
            Self { dx, dy }
        }
    }

    pub fn length(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionSource {
    Detected,
    Orthogonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    /// Undirected line angle in `[0, π)`.
    pub theta: f64,
    /// Consensus size of the detected line this direction comes from.
    pub inliers: usize,
    pub source: DirectionSource,
}

/// Regularity directions Θ.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrientationSet {
    pub directions: Vec<Direction>,
}

impl OrientationSet {
    pub fn from_angles(angles: &[f64]) -> Self {
        Self {
            directions: angles
                .iter()
                .map(|t| Direction {
                    theta: t.rem_euclid(PI),
                    inliers: 0,
                    source: DirectionSource::Detected,
                })
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.directions.iter().map(|d| d.theta).collect()
    }
}

/// Distance between two undirected line angles.
pub fn line_angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evidence {
    Sufficient,
    /// Fewer than [`MIN_MATCHES`] matches; completion runs without Θ.
    Insufficient,
}

#[derive(Debug, Clone)]
pub struct MatchOutcome {
    pub keypoints: usize,
    pub matches: Vec<FeatureMatch>,
    pub evidence: Evidence,
}

/// Self-matches the features of one image with the ratio test and no
/// geometric filtering. Each feature keeps only its best partner, searched
/// among features at least [`MIN_OFFSET_LENGTH`] away.
pub fn match_features(features: &[Feature]) -> Vec<FeatureMatch> {
    let min_sq = MIN_OFFSET_LENGTH * MIN_OFFSET_LENGTH;
    let mut out = Vec::new();
    for (i, a) in features.iter().enumerate() {
        let mut best = (f64::INFINITY, usize::MAX);
        let mut second = f64::INFINITY;
        for (j, b) in features.iter().enumerate() {
            if i == j {
                continue;
            }
            let dx = b.keypoint.x - a.keypoint.x;
            let dy = b.keypoint.y - a.keypoint.y;
            if dx * dx + dy * dy < min_sq {
                continue;
            }
            let d: f64 = a
                .descriptor
                .iter()
                .zip(&b.descriptor)
                .map(|(p, q)| {
                    let t = (*p - *q) as f64;
                    t * t
                })
                .sum();
            if d < best.0 {
                second = best.0;
                best = (d, j);
            } else if d < second {
                second = d;
            }
        }
        if best.1 == usize::MAX {
            continue;
        }
        let (d1, d2) = (best.0.sqrt(), second.sqrt());
        // Exact repeats (a perfectly periodic pattern) tie with each other;
        // they are accepted rather than rejected as ambiguous.
        let duplicate = d1 <= DUPLICATE_DISTANCE;
        if duplicate || d1 <= RATIO_THRESHOLD * d2 {
            let b = &features[best.1];
            let ratio = if d2 > 0.0 && d2.is_finite() { d1 / d2 } else { 0.0 };
            out.push(FeatureMatch {
                p1: [a.keypoint.x, a.keypoint.y],
                p2: [b.keypoint.x, b.keypoint.y],
                ratio,
            });
        }
    }
    out
}

pub fn detect_and_match(raster: &ColorRaster, mask: &MaskRaster, backend: &dyn FeatureBackend) -> MatchOutcome {
    let features = backend.extract(raster, mask);
    let matches = match_features(&features);
    let evidence = if matches.len() < MIN_MATCHES {
        Evidence::Insufficient
    } else {
        Evidence::Sufficient
    };
    MatchOutcome {
        keypoints: features.len(),
        matches,
        evidence,
    }
}

/// Canonical offsets of the matches, dropping those shorter than the minimum length.
pub fn match_offsets(matches: &[FeatureMatch]) -> Vec<Offset> {
    matches
        .iter()
        .map(FeatureMatch::offset)
        .filter(|o| o.length() >= MIN_OFFSET_LENGTH)
        .collect()
}

#[inline]
fn perpendicular_distance(o: &Offset, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    (-s * o.dx + c * o.dy).abs()
}

/// Least-squares direction of a line through the origin.
fn principal_angle(points: &[Offset]) -> f64 {
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for o in points {
        sxx += o.dx * o.dx;
        syy += o.dy * o.dy;
        sxy += o.dx * o.dy;
    }
    (0.5 * (2.0 * sxy).atan2(sxx - syy)).rem_euclid(PI)
}

/// Sequential RANSAC of up to two lines through the origin of the offset
/// scatter, closed under orthogonal directions.
pub fn ransac_directions(offsets: &[Offset], seed: u64) -> Result<OrientationSet, RegularityError> {
    if offsets.len() < MIN_MATCHES {
        return Err(RegularityError::TooFewOffsets(offsets.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining: Vec<Offset> = offsets.iter().copied().filter(|o| o.length() > 0.0).collect();
    let mut detected: Vec<Direction> = Vec::new();

    for _ in 0..MAX_LINES {
        if remaining.is_empty() {
            break;
        }
        let mut best: Option<(f64, usize)> = None;
        for _ in 0..RANSAC_ITERATIONS {
            let o = remaining[rng.random_range(0..remaining.len())];
            let theta = o.dy.atan2(o.dx).rem_euclid(PI);
            let n = remaining
                .iter()
                .filter(|p| perpendicular_distance(p, theta) <= INLIER_DISTANCE)
                .count();
            if best.is_none_or(|(_, b)| n > b) {
                best = Some((theta, n));
            }
        }
        let Some((theta, count)) = best else { break };
        if (count as f64) < ACCEPT_RATIO * remaining.len() as f64 {
            break;
        }
        let inliers: Vec<Offset> = remaining
            .iter()
            .copied()
            .filter(|p| perpendicular_distance(p, theta) <= INLIER_DISTANCE)
            .collect();
        let refined = principal_angle(&inliers);
        // Keep the refit only if it does not lose consensus.
        let refined_count = remaining
            .iter()
            .filter(|p| perpendicular_distance(p, refined) <= INLIER_DISTANCE)
            .count();
        let theta = if refined_count >= count { refined } else { theta };
        remaining.retain(|p| perpendicular_distance(p, theta) > INLIER_DISTANCE);
        detected.push(Direction {
            theta,
            inliers: count,
            source: DirectionSource::Detected,
        });
    }

    let mut all: Vec<Direction> = Vec::new();
    let mut push = |d: Direction| {
        if all.iter().all(|e| line_angle_distance(e.theta, d.theta) >= MIN_SEPARATION) {
            all.push(d);
        }
    };
    for d in &detected {
        push(*d);
    }
    for d in &detected {
        push(Direction {
            theta: (d.theta + FRAC_PI_2).rem_euclid(PI),
            inliers: d.inliers,
            source: DirectionSource::Orthogonal,
        });
    }
    Ok(OrientationSet { directions: all })
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub keypoints: usize,
    pub matches: usize,
    pub offsets: Vec<Offset>,
    pub evidence: Evidence,
    pub orientations: OrientationSet,
}

/// Θ for a raster: feature self-matching followed by direction RANSAC.
/// Insufficient evidence yields an empty set.
pub fn estimate_orientations(
    raster: &ColorRaster,
    mask: &MaskRaster,
    backend: &dyn FeatureBackend,
    seed: u64,
) -> RegularityReport {
    let outcome = detect_and_match(raster, mask, backend);
    let offsets = match_offsets(&outcome.matches);
    let orientations = match outcome.evidence {
        Evidence::Sufficient => ransac_directions(&offsets, seed).unwrap_or_default(),
        Evidence::Insufficient => OrientationSet::default(),
    };
    if outcome.evidence == Evidence::Insufficient {
        log::info!(
            "insufficient regularity evidence ({} matches); completing without directions",
            outcome.matches.len()
        );
    }
    RegularityReport {
        keypoints: outcome.keypoints,
        matches: outcome.matches.len(),
        offsets,
        evidence: outcome.evidence,
        orientations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deg(a: f64) -> f64 {
        a.to_radians()
    }

    #[test]
    fn canonical_half_plane() {
        assert_eq!(Offset::new(3.0, -4.0), Offset::new(-3.0, 4.0));
        assert_eq!(Offset::new(-5.0, 0.0), Offset { dx: 5.0, dy: 0.0 });
        assert_eq!(Offset::new(2.0, 1.0), Offset { dx: 2.0, dy: 1.0 });
    }

    #[test]
    fn noiseless_thirty_degrees() {
        let offsets: Vec<Offset> = (1..=40)
            .map(|k| {
                let r = 5.0 * k as f64;
                Offset::new(r * deg(30.0).cos(), r * deg(30.0).sin())
            })
            .collect();
        let set = ransac_directions(&offsets, 1).unwrap();
        let angles = set.angles();
        assert_eq!(angles.len(), 2);
        assert!((angles[0] - deg(30.0)).abs() < 1e-6, "{angles:?}");
        assert!((angles[1] - deg(120.0)).abs() < 1e-6);
        assert_eq!(set.directions[1].source, DirectionSource::Orthogonal);
    }

    #[test]
    fn nineteen_offsets_is_too_few() {
        let offsets = vec![Offset::new(10.0, 0.0); 19];
        assert_eq!(ransac_directions(&offsets, 0), Err(RegularityError::TooFewOffsets(19)));
    }

    #[test]
    fn no_consensus_gives_empty_set() {
        // Points on a circle: any line through the origin catches at most two.
        let offsets: Vec<Offset> = (0..60)
            .map(|k| {
                let t = PI * k as f64 / 60.0;
                Offset::new(200.0 * t.cos(), 200.0 * t.sin())
            })
            .collect();
        assert!(ransac_directions(&offsets, 4).unwrap().is_empty());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let offsets: Vec<Offset> = (0..100)
            .map(|_| Offset::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)))
            .collect();
        assert_eq!(ransac_directions(&offsets, 5), ransac_directions(&offsets, 5));
    }

    #[test]
    fn angle_distance_wraps() {
        assert!((line_angle_distance(deg(1.0), deg(179.0)) - deg(2.0)).abs() < 1e-12);
    }
}
