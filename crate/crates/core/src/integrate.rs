//! Top-down orthographic rasterization of a mesh ROI into a color raster and a
//! facet-id raster.
//!
//! The rasterizer is a plain edge-function fill over pixel centers with the
//! top-left rule and a floating-point depth buffer. Texture colors come from
//! bilinear sampling of the facet's atlas at the affinely interpolated texel.
//! Rows are split into bands that are filled in parallel; every band walks the
//! facets in index order, so the output does not depend on scheduling.

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::TexturedMesh;
use crate::raster::{ColorRaster, Dims, FacetRaster, NO_FACET, SENTINEL_COLOR};

/// Largest viewport side in pixels.
pub const MAX_VIEWPORT: usize = 16384;

const BAND_ROWS: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("roi has non-positive ground extent ({0} x {1})")]
    EmptyRoi(f64, f64),
    #[error("gsd must be positive, got {0}")]
    BadGsd(f64),
    #[error("viewport {width}x{height} exceeds {MAX_VIEWPORT} px; roi too large for the chosen gsd")]
    ViewportTooLarge { width: f64, height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpAxis {
    X,
    Y,
    #[default]
    Z,
}

impl UpAxis {
    /// World axis indices `(ground_u, ground_v, up)`.
    pub fn axes(self) -> (usize, usize, usize) {
        match self {
            UpAxis::X => (1, 2, 0),
            UpAxis::Y => (0, 2, 1),
            UpAxis::Z => (0, 1, 2),
        }
    }
}

impl std::str::FromStr for UpAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(UpAxis::X),
            "y" => Ok(UpAxis::Y),
            "z" => Ok(UpAxis::Z),
            other => Err(format!("unknown up axis `{other}` (expected x, y or z)")),
        }
    }
}

impl std::fmt::Display for UpAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UpAxis::X => "x",
            UpAxis::Y => "y",
            UpAxis::Z => "z",
        })
    }
}

/// Axis-aligned box in world units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Roi {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    /// Bounding box of the mesh positions.
    pub fn bounding(mesh: &TexturedMesh) -> Option<Self> {
        let mut it = mesh.positions.iter();
        let first = *it.next()?;
        let mut roi = Roi::new(first, first);
        for p in it {
            for k in 0..3 {
                roi.min[k] = roi.min[k].min(p[k]);
                roi.max[k] = roi.max[k].max(p[k]);
            }
        }
        Some(roi)
    }

    fn overlaps(&self, lo: [f64; 3], hi: [f64; 3]) -> bool {
        (0..3).all(|k| lo[k] <= self.max[k] && hi[k] >= self.min[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSpec {
    /// Orthographic projection, view space to clip space.
    pub projection: Matrix4<f64>,
    /// World to view: axis permutation followed by a translation to the roi corner.
    pub view: Matrix4<f64>,
    pub width: usize,
    pub height: usize,
    pub gsd: f64,
    pub roi: Roi,
    pub up: UpAxis,
    /// Composite world -> (pixel x, pixel y, depth) transform.
    screen: Matrix4<f64>,
}

impl ProjectionSpec {
    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    /// Pixel coordinates and depth of a world point. Smaller depth is closer
    /// to the camera.
    #[inline]
    pub fn project(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.screen * Vector4::new(p[0], p[1], p[2], 1.0);
        [v.x, v.y, v.z]
    }

    /// Ground coordinates (world units) of the center of pixel `(x, y)`.
    pub fn pixel_to_ground(&self, x: f64, y: f64) -> [f64; 2] {
        let (a, b, _) = self.up.axes();
        [self.roi.min[a] + x * self.gsd, self.roi.min[b] + y * self.gsd]
    }
}

/// Builds a top-down orthographic camera over `roi`, looking along the
/// negative up axis, with one pixel per `gsd` world units.
pub fn build_projection(roi: Roi, gsd: f64, up: UpAxis) -> Result<ProjectionSpec, ProjectionError> {
    if !(gsd > 0.0) || !gsd.is_finite() {
        return Err(ProjectionError::BadGsd(gsd));
    }
    let (a, b, u) = up.axes();
    let ext_a = roi.max[a] - roi.min[a];
    let ext_b = roi.max[b] - roi.min[b];
    if !(ext_a > 0.0 && ext_b > 0.0) {
        return Err(ProjectionError::EmptyRoi(ext_a, ext_b));
    }
    let w = (ext_a / gsd).ceil();
    let h = (ext_b / gsd).ceil();
    if w > MAX_VIEWPORT as f64 || h > MAX_VIEWPORT as f64 {
        return Err(ProjectionError::ViewportTooLarge { width: w, height: h });
    }
    let (width, height) = ((w as usize).max(1), (h as usize).max(1));

    let mut view = Matrix4::zeros();
    view[(0, a)] = 1.0;
    view[(1, b)] = 1.0;
    view[(2, u)] = 1.0;
    view[(3, 3)] = 1.0;
    view[(0, 3)] = -roi.min[a];
    view[(1, 3)] = -roi.min[b];
    view[(2, 3)] = -roi.min[u];

    // Depth range padded so flat rois still get a finite depth scale.
    let right = width as f64 * gsd;
    let top = height as f64 * gsd;
    let up_ext = (roi.max[u] - roi.min[u]).max(0.0);
    let pad = (0.01 * up_ext).max(1.0);
    let (near, far) = (-pad, up_ext + pad);
    let mut projection = Matrix4::identity();
    projection[(0, 0)] = 2.0 / right;
    projection[(0, 3)] = -1.0;
    projection[(1, 1)] = 2.0 / top;
    projection[(1, 3)] = -1.0;
    // Higher points map to smaller depth.
    projection[(2, 2)] = -2.0 / (far - near);
    projection[(2, 3)] = (far + near) / (far - near);

    let mut viewport = Matrix4::identity();
    viewport[(0, 0)] = width as f64 / 2.0;
    viewport[(0, 3)] = width as f64 / 2.0;
    viewport[(1, 1)] = height as f64 / 2.0;
    viewport[(1, 3)] = height as f64 / 2.0;

    let screen = viewport * projection * view;
    Ok(ProjectionSpec {
        projection,
        view,
        width,
        height,
        gsd,
        roi,
        up,
        screen,
    })
}

/// Result of [`rasterize`].
#[derive(Debug, Clone)]
pub struct Rendered {
    pub color: ColorRaster,
    pub facets: FacetRaster,
    /// Facets that passed the roi test.
    pub facets_in_roi: usize,
}

impl Rendered {
    /// True when no facet reached the viewport.
    pub fn is_empty(&self) -> bool {
        self.facets.covered_count() == 0
    }
}

/// Signed doubled area of `(a, b, p)`, computed with the edge endpoints in a
/// canonical order so that a shared edge yields exactly opposite values for
/// its two triangles.
#[inline]
fn edge_function(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let (s, e, sign) = if (a[0], a[1]) <= (b[0], b[1]) {
        (a, b, 1.0)
    } else {
        (b, a, -1.0)
    };
    sign * ((e[0] - s[0]) * (p[1] - s[1]) - (e[1] - s[1]) * (p[0] - s[0]))
}

/// Top-left rule for a counter-clockwise (positive area) triangle in pixel
/// coordinates with y pointing down the rows.
#[inline]
fn is_top_left(a: [f64; 2], b: [f64; 2]) -> bool {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

/// Bilinear sample with texel centers at `i + 0.5`, clamped to edge texels.
#[inline]
pub fn sample_bilinear(img: &image::RgbImage, u: f64, v: f64) -> [u8; 3] {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x = u - 0.5;
    let y = v - 0.5;
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let cx = |i: i64| i.clamp(0, w - 1) as u32;
    let cy = |i: i64| i.clamp(0, h - 1) as u32;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let p00 = img.get_pixel(cx(x0), cy(y0)).0;
    let p10 = img.get_pixel(cx(x0 + 1), cy(y0)).0;
    let p01 = img.get_pixel(cx(x0), cy(y0 + 1)).0;
    let p11 = img.get_pixel(cx(x0 + 1), cy(y0 + 1)).0;
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        let value = top * (1.0 - fy) + bottom * fy;
        out[c] = value.round().clamp(0.0, 255.0) as u8;
    }
    out
}

struct ScreenFacet {
    index: u32,
    /// Vertices in positive-area order.
    pts: [[f64; 2]; 3],
    depth: [f64; 3],
    /// Texel coordinates matching `pts`.
    texels: [[f64; 2]; 3],
    atlas: usize,
    area: f64,
    rows: (usize, usize),
    cols: (usize, usize),
}

/// Pixel index range whose centers `i + 0.5` fall in `[lo, hi]`.
fn center_range(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(n as f64 - 1.0);
    (first <= last).then_some((first as usize, last as usize))
}

fn prepare_facets(mesh: &TexturedMesh, proj: &ProjectionSpec) -> (Vec<ScreenFacet>, usize) {
    let mut in_roi = 0;
    let mut out = Vec::new();
    for (k, f) in mesh.facets.iter().enumerate() {
        let corners = f.map(|i| mesh.positions[i as usize]);
        let mut lo = corners[0];
        let mut hi = corners[0];
        for c in &corners[1..] {
            for d in 0..3 {
                lo[d] = lo[d].min(c[d]);
                hi[d] = hi[d].max(c[d]);
            }
        }
        if !proj.roi.overlaps(lo, hi) {
            continue;
        }
        in_roi += 1;
        let s = corners.map(|c| proj.project(c));
        let mut pts = s.map(|p| [p[0], p[1]]);
        let mut depth = s.map(|p| p[2]);
        let mut texels = [0, 1, 2].map(|c| mesh.texel_of(k, c));
        let mut area = edge_function(pts[0], pts[1], pts[2]);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        if area < 0.0 {
            pts.swap(1, 2);
            depth.swap(1, 2);
            texels.swap(1, 2);
            area = -area;
        }
        let min_x = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let max_x = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let min_y = pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let max_y = pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        let (Some(cols), Some(rows)) = (
            center_range(min_x, max_x, proj.width),
            center_range(min_y, max_y, proj.height),
        ) else {
            continue;
        };
        out.push(ScreenFacet {
            index: k as u32,
            pts,
            depth,
            texels,
            atlas: mesh.facet_atlas[k] as usize,
            area,
            rows,
            cols,
        });
    }
    (out, in_roi)
}

/// Renders the facets of `mesh` that overlap the roi.
pub fn rasterize(mesh: &TexturedMesh, proj: &ProjectionSpec) -> Rendered {
    let dims = proj.dims();
    let (facets, facets_in_roi) = prepare_facets(mesh, proj);

    let mut ids = vec![NO_FACET; dims.len()];
    let mut colors = vec![SENTINEL_COLOR; dims.len()];
    let band_len = BAND_ROWS * dims.width;

    ids.par_chunks_mut(band_len)
        .zip(colors.par_chunks_mut(band_len))
        .enumerate()
        .for_each(|(band, (ids, colors))| {
            let row0 = band * BAND_ROWS;
            let rows = ids.len() / dims.width;
            let mut depth_buf = vec![f64::INFINITY; ids.len()];
            for f in &facets {
                let y_lo = f.rows.0.max(row0);
                let y_hi = f.rows.1.min(row0 + rows - 1);
                if y_lo > y_hi {
                    continue;
                }
                let [p0, p1, p2] = f.pts;
                let tl = [is_top_left(p1, p2), is_top_left(p2, p0), is_top_left(p0, p1)];
                let atlas = &mesh.atlases[f.atlas].image;
                for y in y_lo..=y_hi {
                    let py = y as f64 + 0.5;
                    for x in f.cols.0..=f.cols.1 {
                        let p = [x as f64 + 0.5, py];
                        let w = [
                            edge_function(p1, p2, p),
                            edge_function(p2, p0, p),
                            edge_function(p0, p1, p),
                        ];
                        let inside = (0..3).all(|i| w[i] > 0.0 || (w[i] == 0.0 && tl[i]));
                        if !inside {
                            continue;
                        }
                        let b = w.map(|wi| wi / f.area);
                        let z = b[0] * f.depth[0] + b[1] * f.depth[1] + b[2] * f.depth[2];
                        let i = (y - row0) * dims.width + x;
                        // Strictly closer wins; equal depth keeps the lower facet index.
                        if z < depth_buf[i] {
                            depth_buf[i] = z;
                            ids[i] = f.index;
                            let u = b[0] * f.texels[0][0] + b[1] * f.texels[1][0] + b[2] * f.texels[2][0];
                            let v = b[0] * f.texels[0][1] + b[1] * f.texels[1][1] + b[2] * f.texels[2][1];
                            colors[i] = sample_bilinear(atlas, u, v);
                        }
                    }
                }
            }
        });

    let valid = ids.iter().map(|f| *f != NO_FACET).collect();
    let rendered = Rendered {
        color: ColorRaster::from_parts(dims, colors, valid),
        facets: FacetRaster::from_ids(dims, ids),
        facets_in_roi,
    };
    if rendered.is_empty() {
        log::warn!("no facet intersects the roi; rasters are empty");
    }
    rendered
}

/// Whether `p` lies in the projected triangle of `facet`, allowing `tol` of
/// slack in normalized barycentric units.
pub fn projected_contains(mesh: &TexturedMesh, proj: &ProjectionSpec, facet: usize, p: [f64; 2], tol: f64) -> bool {
    let s = mesh.facets[facet].map(|i| {
        let q = proj.project(mesh.positions[i as usize]);
        [q[0], q[1]]
    });
    let area = edge_function(s[0], s[1], s[2]);
    if area == 0.0 {
        return false;
    }
    let w = [
        edge_function(s[1], s[2], p) / area,
        edge_function(s[2], s[0], p) / area,
        edge_function(s[0], s[1], p) / area,
    ];
    w.iter().all(|wi| *wi >= -tol)
}
