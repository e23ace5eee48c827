//! Structure-aware image completion: coarse-to-fine PatchMatch with an
//! edge-first visiting order and direction-guided random search.

pub mod canvas;
pub mod energy;
pub mod nnf;
pub mod queue;
pub mod search;
pub mod synth;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{ColorRaster, Dims, MaskRaster};
use crate::regularity::{prewitt_edges, EdgeMap, OrientationSet};

pub use canvas::{downsample, Canvas, DistanceRaster, Domain};
pub use energy::{energy, regularity_cost, Energy, EnergyModel, PatchWeights};
pub use nnf::NNField;
pub use queue::{build_priority_queue, PriorityQueue};
pub use search::{guided_random_candidates, patchmatch_pass, sample_band, search_radii, BandSample, PassStats};
pub use synth::{fill_from_boundary, synthesize, Synthesis};

#[derive(Debug, Error, PartialEq)]
pub enum CompleteError {
    #[error("raster is {raster:?} but the mask is {mask:?}")]
    DimensionMismatch { raster: Dims, mask: Dims },
    #[error("no usable source pixels outside the void")]
    NoSourcePixels,
    #[error("invalid completion parameter: {0}")]
    BadParams(String),
}

/// Form of the regularity term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularityCost {
    /// `1 - |cos|`: zero for offsets along either sense of a direction.
    #[default]
    Undirected,
    /// Plain `cos` of the angle difference.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    /// Odd patch width in pixels.
    pub patch_size: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Search passes per pyramid level.
    pub iterations: usize,
    pub edge_threshold: f64,
    pub synthesis: Synthesis,
    pub directional_guidance: bool,
    pub linear_ordering: bool,
    pub regularity_cost: RegularityCost,
    /// Coarsening stops once the image fits in this many pixels...
    pub coarse_max_dim: usize,
    /// ...or the void fits in this many.
    pub coarse_void_dim: usize,
    /// Hard cap on the number of levels, including the finest.
    pub max_levels: usize,
    pub seed: u64,
    /// Keep per-level snapshots in the result.
    pub keep_levels: bool,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            patch_size: 21,
            lambda1: 5e-4,
            lambda2: 0.5,
            iterations: 5,
            edge_threshold: crate::regularity::DEFAULT_EDGE_THRESHOLD,
            synthesis: Synthesis::Vote,
            directional_guidance: true,
            linear_ordering: true,
            regularity_cost: RegularityCost::Undirected,
            coarse_max_dim: 64,
            coarse_void_dim: 8,
            max_levels: 12,
            seed: 0,
            keep_levels: false,
        }
    }
}

impl CompletionParams {
    /// Patch weight falloff.
    pub fn sigma_w(&self) -> f64 {
        self.patch_size as f64 / 4.0
    }

    pub fn validate(&self) -> Result<(), CompleteError> {
        let bad = |m: &str| Err(CompleteError::BadParams(m.into()));
        if self.patch_size < 3 || self.patch_size.is_multiple_of(2) {
            return bad("patch size must be odd and at least 3");
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) || !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return bad("weights must be finite and non-negative");
        }
        if self.iterations == 0 {
            return bad("at least one iteration is required");
        }
        if self.max_levels == 0 {
            return bad("at least one level is required");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LevelStats {
    pub level: usize,
    pub width: usize,
    pub height: usize,
    pub void_pixels: usize,
    pub edge_pixels: usize,
    pub passes: Vec<PassSummary>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PassSummary {
    pub evaluated: usize,
    pub adopted: usize,
    pub violations: usize,
    pub mean_energy: f64,
}

impl From<PassStats> for PassSummary {
    fn from(s: PassStats) -> Self {
        Self {
            evaluated: s.evaluated,
            adopted: s.adopted,
            violations: s.violations,
            mean_energy: if s.visited > 0 { s.energy_after / s.visited as f64 } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CompletionStats {
    /// Finest level first.
    pub levels: Vec<LevelStats>,
}

impl CompletionStats {
    pub fn violations(&self) -> usize {
        self.levels
            .iter()
            .flat_map(|l| &l.passes)
            .map(|p| p.violations)
            .sum()
    }
}

/// State of one level after its last pass.
#[derive(Debug, Clone)]
pub struct LevelSnapshot {
    pub level: usize,
    pub image: ColorRaster,
    pub void: MaskRaster,
    pub nnf: NNField,
}

#[derive(Debug, Clone)]
pub struct Completion {
    pub raster: ColorRaster,
    pub nnf: NNField,
    pub stats: CompletionStats,
    /// Coarsest first; empty unless requested.
    pub snapshots: Vec<LevelSnapshot>,
}

/// Fills the void of `raster`. Known pixels come back bit-identical and the
/// validity flags are unchanged. `edges` is the edge map of the finest
/// level; coarser levels compute their own.
pub fn complete(
    raster: &ColorRaster,
    mask: &MaskRaster,
    edges: &EdgeMap,
    theta: &OrientationSet,
    params: &CompletionParams,
) -> Result<Completion, CompleteError> {
    params.validate()?;
    let dims = raster.dims();
    if mask.dims() != dims || edges.dims() != dims {
        return Err(CompleteError::DimensionMismatch {
            raster: dims,
            mask: mask.dims(),
        });
    }
    let domain = Domain::new(mask.clone(), raster.validity());
    if mask.void_count() == 0 {
        return Ok(Completion {
            raster: raster.clone(),
            nnf: NNField::empty(dims),
            stats: CompletionStats::default(),
            snapshots: vec![],
        });
    }
    if domain.source_count() == 0 {
        return Err(CompleteError::NoSourcePixels);
    }

    let mut levels = vec![(Canvas::from_raster(raster), domain)];
    while levels.len() < params.max_levels {
        let (c, d) = levels.last().expect("at least one level");
        let dd = c.dims();
        let void_dim = d
            .void
            .void_bounds()
            .map(|(x0, y0, x1, y1)| (x1 - x0 + 1).max(y1 - y0 + 1))
            .unwrap_or(0);
        if dd.max_dim() <= params.coarse_max_dim || void_dim <= params.coarse_void_dim || dd.width < 2 || dd.height < 2 {
            break;
        }
        let (nc, nd) = downsample(c, d);
        if nd.source_count() == 0 {
            break;
        }
        levels.push((nc, nd));
    }
    log::debug!("completion pyramid has {} level(s)", levels.len());

    let theta = theta.angles();
    let weights = PatchWeights::for_params(params);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut stats = CompletionStats::default();
    let mut snapshots = Vec::new();

    let coarsest = levels.len() - 1;
    let (c, d) = &levels[coarsest];
    let mut canvas = fill_from_boundary(c, d);
    let mut nnf = NNField::random(d, &mut rng);

    for level in (0..levels.len()).rev() {
        let domain = &levels[level].1;
        if level != coarsest {
            let fine_known = &levels[level].0;
            nnf = nnf.upsample(domain, &mut rng);
            canvas = synthesize(fine_known, domain, &nnf, params.synthesis, &weights);
        }
        let level_edges = if level == 0 {
            edges.clone()
        } else {
            prewitt_edges(&canvas.to_raster(None), &domain.void, params.edge_threshold)
        };
        let mut lstats = LevelStats {
            level,
            width: domain.dims().width,
            height: domain.dims().height,
            void_pixels: domain.void.void_count(),
            edge_pixels: level_edges.count(),
            passes: vec![],
        };
        let mut queue = build_priority_queue(&level_edges, domain, params, 1);
        for pass in 1..=params.iterations {
            if !params.linear_ordering && pass > 1 {
                queue = build_priority_queue(&level_edges, domain, params, pass);
            }
            let model = EnergyModel::new(&canvas, domain, &theta, params, &weights);
            let ps = patchmatch_pass(&mut nnf, &model, &queue, &mut rng);
            if ps.violations > 0 {
                log::warn!("level {level} pass {pass}: {} pixel energies increased", ps.violations);
            }
            lstats.passes.push(ps.into());
            canvas = synthesize(&canvas, domain, &nnf, params.synthesis, &weights);
        }
        log::debug!(
            "level {level} ({}x{}): {} void px, {} edges",
            lstats.width,
            lstats.height,
            lstats.void_pixels,
            lstats.edge_pixels
        );
        stats.levels.push(lstats);
        if params.keep_levels {
            snapshots.push(LevelSnapshot {
                level,
                image: canvas.to_raster(None),
                void: domain.void.clone(),
                nnf: nnf.clone(),
            });
        }
    }
    stats.levels.reverse();

    let filled = canvas.to_raster(Some(raster));
    let mut out = raster.clone();
    for y in 0..dims.height {
        for x in 0..dims.width {
            if mask.is_void(x, y) {
                out.pixels_mut()[dims.index(x, y)] = filled.get(x, y);
            }
        }
    }
    Ok(Completion {
        raster: out,
        nnf,
        stats,
        snapshots,
    })
}
