//! Pixel to texel mapping, write-back of edited pixels into the atlases, and
//! flattening of the geometry under the void mask.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::integrate::ProjectionSpec;
use crate::mesh::{Texel, TexturedMesh};
use crate::raster::{ColorRaster, Dims, FacetRaster, MaskRaster};

/// Smallest |signed area| accepted for a triangle, in squared pixels.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

pub const FLATTEN_ITERATIONS: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum RemapError {
    #[error("degenerate triangle (signed area {0:e})")]
    DegenerateTriangle(f64),
    #[error("raster dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch(Dims, Dims),
    #[error("cannot fit ground plane: only {0} support vertices outside the masked facets")]
    NoGroundSupport(usize),
}

/// Normalized barycentric weights of a point with respect to a triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barycentric {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Barycentric {
    /// Point with these weights in another triangle.
    #[inline]
    pub fn interpolate(&self, tri: &[[f64; 2]; 3]) -> [f64; 2] {
        [
            self.a * tri[0][0] + self.b * tri[1][0] + self.c * tri[2][0],
            self.a * tri[0][1] + self.b * tri[1][1] + self.c * tri[2][1],
        ]
    }
}

/// Closed-form barycentric coordinates of `p` in `tri`.
pub fn barycentric(tri: &[[f64; 2]; 3], p: [f64; 2]) -> Result<Barycentric, RemapError> {
    let [t0, t1, t2] = *tri;
    let area = (t1[0] - t0[0]) * (t2[1] - t0[1]) - (t2[0] - t0[0]) * (t1[1] - t0[1]);
    if area.abs() <= MIN_TRIANGLE_AREA || !area.is_finite() {
        return Err(RemapError::DegenerateTriangle(area));
    }
    let b = ((p[0] - t0[0]) * (t2[1] - t0[1]) - (t2[0] - t0[0]) * (p[1] - t0[1])) / area;
    let c = ((t1[0] - t0[0]) * (p[1] - t0[1]) - (p[0] - t0[0]) * (t1[1] - t0[1])) / area;
    Ok(Barycentric { a: 1.0 - b - c, b, c })
}

/// Affine pixel -> texel map of one facet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacetAffine {
    /// Rows: `u = m[0]·(x, y, 1)`, `v = m[1]·(x, y, 1)`.
    m: [[f64; 3]; 2],
    pub atlas: u32,
}

impl FacetAffine {
    /// Composes the inverse of the projected-triangle frame with the uv frame.
    pub fn for_facet(mesh: &TexturedMesh, proj: &ProjectionSpec, facet: usize) -> Result<Self, RemapError> {
        let screen = projected_triangle(mesh, proj, facet);
        let texel = texel_triangle(mesh, facet);
        let area = (screen[1][0] - screen[0][0]) * (screen[2][1] - screen[0][1])
            - (screen[2][0] - screen[0][0]) * (screen[1][1] - screen[0][1]);
        if area.abs() <= MIN_TRIANGLE_AREA {
            return Err(RemapError::DegenerateTriangle(area));
        }
        let uv_area = (texel[1][0] - texel[0][0]) * (texel[2][1] - texel[0][1])
            - (texel[2][0] - texel[0][0]) * (texel[1][1] - texel[0][1]);
        if uv_area.abs() <= MIN_TRIANGLE_AREA {
            return Err(RemapError::DegenerateTriangle(uv_area));
        }
        let src = Matrix3::new(
            screen[0][0], screen[1][0], screen[2][0],
            screen[0][1], screen[1][1], screen[2][1],
            1.0, 1.0, 1.0,
        );
        let inv = src.try_inverse().ok_or(RemapError::DegenerateTriangle(area))?;
        let dst = Matrix3::new(
            texel[0][0], texel[1][0], texel[2][0],
            texel[0][1], texel[1][1], texel[2][1],
            1.0, 1.0, 1.0,
        );
        let m = dst * inv;
        Ok(Self {
            m: [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]]],
            atlas: mesh.facet_atlas[facet],
        })
    }

    #[inline]
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let v = Vector3::new(p[0], p[1], 1.0);
        [
            self.m[0][0] * v.x + self.m[0][1] * v.y + self.m[0][2],
            self.m[1][0] * v.x + self.m[1][1] * v.y + self.m[1][2],
        ]
    }
}

/// Facet corners in pixel coordinates.
pub fn projected_triangle(mesh: &TexturedMesh, proj: &ProjectionSpec, facet: usize) -> [[f64; 2]; 3] {
    mesh.facets[facet].map(|i| {
        let q = proj.project(mesh.positions[i as usize]);
        [q[0], q[1]]
    })
}

/// Facet uv corners in texel pixel units of its atlas.
pub fn texel_triangle(mesh: &TexturedMesh, facet: usize) -> [[f64; 2]; 3] {
    [0, 1, 2].map(|c| mesh.texel_of(facet, c))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TexelRecord {
    pub texel: Texel,
    pub facet: u32,
}

/// Per-pixel texel lookup for a rendered view.
#[derive(Debug, Clone)]
pub struct TexelMap {
    dims: Dims,
    records: Vec<Option<TexelRecord>>,
    /// Covered pixels left without a record because a triangle was degenerate.
    pub unmapped: usize,
}

impl TexelMap {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<TexelRecord> {
        self.records[self.dims.index(x, y)]
    }
}

/// Precomputes one affine map per visible facet and evaluates it at every
/// covered pixel center.
pub fn build_texel_map(mesh: &TexturedMesh, raster_f: &FacetRaster, proj: &ProjectionSpec) -> TexelMap {
    let dims = raster_f.dims();
    let mut affines: BTreeMap<u32, Option<FacetAffine>> = BTreeMap::new();
    let mut records = vec![None; dims.len()];
    let mut unmapped = 0;
    for y in 0..dims.height {
        for x in 0..dims.width {
            let Some(f) = raster_f.get(x, y) else { continue };
            let affine = *affines
                .entry(f)
                .or_insert_with(|| FacetAffine::for_facet(mesh, proj, f as usize).ok());
            let Some(affine) = affine else {
                unmapped += 1;
                continue;
            };
            let atlas = &mesh.atlases[affine.atlas as usize];
            let [u, v] = affine.apply([x as f64 + 0.5, y as f64 + 0.5]);
            // Keep the texel inside [0, w) x [0, h).
            let clamp = |c: f64, n: u32| c.clamp(0.0, n as f64 - n as f64 * f64::EPSILON);
            records[dims.index(x, y)] = Some(TexelRecord {
                texel: Texel {
                    u: clamp(u, atlas.width()),
                    v: clamp(v, atlas.height()),
                    atlas: affine.atlas,
                },
                facet: f,
            });
        }
    }
    if unmapped > 0 {
        log::warn!("{unmapped} covered pixels lie on degenerate facets and stay unmapped");
    }
    TexelMap {
        dims,
        records,
        unmapped,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DeintegrateStats {
    pub edited_pixels: usize,
    pub written_texels: usize,
    /// Texels targeted by more than one edited pixel.
    pub collided_texels: usize,
    /// Edited pixels without a texel record.
    pub skipped_pixels: usize,
}

/// Writes edited pixels back into the atlases. Each edited pixel targets the
/// texel whose center is nearest to its mapped position; colliding pixels are
/// averaged. Untouched texels keep their exact values.
pub fn deintegrate(
    edited: &ColorRaster,
    edit_mask: &MaskRaster,
    tmap: &TexelMap,
    mesh: &TexturedMesh,
) -> Result<(TexturedMesh, DeintegrateStats), RemapError> {
    if edited.dims() != edit_mask.dims() {
        return Err(RemapError::DimensionMismatch(edited.dims(), edit_mask.dims()));
    }
    if edited.dims() != tmap.dims() {
        return Err(RemapError::DimensionMismatch(edited.dims(), tmap.dims()));
    }
    let dims = edited.dims();
    let mut stats = DeintegrateStats::default();
    // (atlas, x, y) -> (sum rgb, count)
    let mut acc: BTreeMap<(u32, u32, u32), ([u64; 3], u32)> = BTreeMap::new();
    for y in 0..dims.height {
        for x in 0..dims.width {
            if !edit_mask.is_void(x, y) {
                continue;
            }
            stats.edited_pixels += 1;
            let Some(rec) = tmap.get(x, y) else {
                stats.skipped_pixels += 1;
                continue;
            };
            let atlas = &mesh.atlases[rec.texel.atlas as usize];
            let (tx, ty) = rec.texel.nearest(atlas.width(), atlas.height());
            let entry = acc.entry((rec.texel.atlas, tx, ty)).or_default();
            let color = edited.get(x, y);
            for c in 0..3 {
                entry.0[c] += color[c] as u64;
            }
            entry.1 += 1;
        }
    }
    let mut out = mesh.clone();
    for ((atlas, tx, ty), (sum, n)) in acc {
        if n > 1 {
            stats.collided_texels += 1;
        }
        stats.written_texels += 1;
        let avg = sum.map(|s| ((s as f64) / (n as f64)).round() as u8);
        out.atlases[atlas as usize].image.put_pixel(tx, ty, image::Rgb(avg));
    }
    if stats.skipped_pixels > 0 {
        log::warn!("{} edited pixels had no texel record", stats.skipped_pixels);
    }
    Ok((out, stats))
}

/// Facets visible under at least one void pixel.
pub fn collect_masked_facets(raster_f: &FacetRaster, mask: &MaskRaster) -> BTreeSet<u32> {
    raster_f
        .raw()
        .iter()
        .zip(mask.bits())
        .filter(|(f, m)| **m && **f != crate::raster::NO_FACET)
        .map(|(f, _)| *f)
        .collect()
}

/// Height plane `up = c0 + c1·g0 + c2·g1` over the two ground axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroundPlane {
    pub coeffs: [f64; 3],
    pub inliers: usize,
}

impl GroundPlane {
    #[inline]
    pub fn height(&self, g: [f64; 2]) -> f64 {
        self.coeffs[0] + self.coeffs[1] * g[0] + self.coeffs[2] * g[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlattenReport {
    pub plane: Option<GroundPlane>,
    pub support_vertices: usize,
    pub moved_vertices: usize,
}

fn plane_through(p: [[f64; 3]; 3]) -> Option<[f64; 3]> {
    let m = Matrix3::new(1.0, p[0][0], p[0][1], 1.0, p[1][0], p[1][1], 1.0, p[2][0], p[2][1]);
    let rhs = Vector3::new(p[0][2], p[1][2], p[2][2]);
    let sol = m.lu().solve(&rhs)?;
    sol.iter().all(|c| c.is_finite()).then(|| [sol[0], sol[1], sol[2]])
}

fn least_squares_plane(points: &[[f64; 3]]) -> Option<[f64; 3]> {
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for p in points {
        let row = Vector3::new(1.0, p[0], p[1]);
        ata += row * row.transpose();
        atb += row * p[2];
    }
    let sol = ata.cholesky()?.solve(&atb);
    sol.iter().all(|c| c.is_finite()).then(|| [sol[0], sol[1], sol[2]])
}

/// Seeded RANSAC fit of the ground plane, refined by least squares on the
/// consensus set. Points are `(ground0, ground1, height)`.
pub fn fit_ground_plane(points: &[[f64; 3]], threshold: f64, iterations: usize, seed: u64) -> Option<GroundPlane> {
    if points.len() < 3 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = |c: &[f64; 3]| {
        points
            .iter()
            .filter(|p| (c[0] + c[1] * p[0] + c[2] * p[1] - p[2]).abs() <= threshold)
            .count()
    };
    let mut best: Option<([f64; 3], usize)> = None;
    for _ in 0..iterations {
        let i = rng.random_range(0..points.len());
        let j = rng.random_range(0..points.len());
        let k = rng.random_range(0..points.len());
        if i == j || j == k || i == k {
            continue;
        }
        let Some(c) = plane_through([points[i], points[j], points[k]]) else { continue };
        let n = count(&c);
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((c, n));
        }
    }
    let (coeffs, _) = best?;
    let inliers: Vec<[f64; 3]> = points
        .iter()
        .filter(|p| (coeffs[0] + coeffs[1] * p[0] + coeffs[2] * p[1] - p[2]).abs() <= threshold)
        .copied()
        .collect();
    let refined = least_squares_plane(&inliers).unwrap_or(coeffs);
    Some(GroundPlane {
        coeffs: refined,
        inliers: count(&refined),
    })
}

/// Drops every vertex used only by `masked` facets onto a ground plane fitted
/// to the vertices of the visible, unmasked facets. Vertices shared with any
/// unmasked facet keep their exact position.
pub fn flatten_facets(
    mesh: &TexturedMesh,
    masked: &BTreeSet<u32>,
    raster_f: &FacetRaster,
    proj: &ProjectionSpec,
    seed: u64,
) -> Result<(TexturedMesh, FlattenReport), RemapError> {
    if masked.is_empty() {
        return Ok((
            mesh.clone(),
            FlattenReport {
                plane: None,
                support_vertices: 0,
                moved_vertices: 0,
            },
        ));
    }
    let (ga, gb, up) = proj.up.axes();
    let visible: BTreeSet<u32> = raster_f
        .raw()
        .iter()
        .copied()
        .filter(|f| *f != crate::raster::NO_FACET)
        .collect();
    let support: BTreeSet<u32> = visible
        .difference(masked)
        .flat_map(|f| mesh.facets[*f as usize])
        .collect();
    let points: Vec<[f64; 3]> = support
        .iter()
        .map(|v| {
            let p = mesh.positions[*v as usize];
            [p[ga], p[gb], p[up]]
        })
        .collect();
    let plane = fit_ground_plane(&points, 2.0 * proj.gsd, FLATTEN_ITERATIONS, seed)
        .ok_or(RemapError::NoGroundSupport(points.len()))?;

    let mut shared: HashSet<u32> = HashSet::new();
    for (k, f) in mesh.facets.iter().enumerate() {
        if !masked.contains(&(k as u32)) {
            shared.extend(f);
        }
    }
    let exclusive: BTreeSet<u32> = masked
        .iter()
        .flat_map(|f| mesh.facets[*f as usize])
        .filter(|v| !shared.contains(v))
        .collect();
    let mut out = mesh.clone();
    for v in &exclusive {
        let p = &mut out.positions[*v as usize];
        p[up] = plane.height([p[ga], p[gb]]);
    }
    Ok((
        out,
        FlattenReport {
            plane: Some(plane),
            support_vertices: points.len(),
            moved_vertices: exclusive.len(),
        },
    ))
}
