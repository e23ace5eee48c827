//! Textured mesh model and its wavefront bundle format.
//!
//! A bundle is an `.obj` file holding geometry positions (`v`), texture
//! coordinates (`vt`) and `v/vt` facets, a `.mtl` file mapping each material to
//! one texture atlas (`map_Kd`), and the atlas images themselves. Facet order
//! in the file is the facet order of both the geometry mesh and the UV mesh.
//!
//! A directory of bundles is read as one logical mesh whose facet, vertex and
//! atlas lists are concatenated in file-name order.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use thiserror::Error;

/// Tolerance for texture coordinates slightly outside the unit square.
pub const UV_EPSILON: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh file not found: {0}")]
    Missing(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("|F| != |F'|: {geometry} geometry facets but {uv} uv facets")]
    FacetCountMismatch { geometry: usize, uv: usize },
    #[error("facet {facet} references {kind} vertex {index} but only {count} exist")]
    IndexOutOfRange {
        facet: usize,
        kind: &'static str,
        index: usize,
        count: usize,
    },
    #[error("facet {facet} uses atlas {atlas} but only {count} atlases exist")]
    AtlasOutOfRange { facet: usize, atlas: usize, count: usize },
    #[error("uv vertex {index} = ({u}, {v}) lies outside [0,1]^2")]
    UvOutOfRange { index: usize, u: f64, v: f64 },
    #[error("unreadable texture image {path}: {source}")]
    Texture {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("cannot write texture image {path}: {source}")]
    TextureWrite {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("material `{0}` is used but never defined or has no map_Kd texture")]
    UnknownMaterial(String),
    #[error("no mesh bundles found in directory {0}")]
    EmptyDirectory(PathBuf),
}

/// One texture atlas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atlas {
    pub name: String,
    pub image: RgbImage,
}

impl Atlas {
    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }
}

/// Continuous texel position in pixel units of one atlas, origin at the
/// top-left corner of the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Texel {
    pub u: f64,
    pub v: f64,
    pub atlas: u32,
}

impl Texel {
    /// Integer texel whose center is nearest to this position.
    pub fn nearest(&self, width: u32, height: u32) -> (u32, u32) {
        let clamp = |c: f64, n: u32| (c.floor().max(0.0) as u32).min(n.saturating_sub(1));
        (clamp(self.u, width), clamp(self.v, height))
    }
}

/// Geometry mesh, UV mesh and atlases, in facet correspondence.
#[derive(Debug, Clone, PartialEq)]
pub struct TexturedMesh {
    pub positions: Vec<[f64; 3]>,
    pub facets: Vec<[u32; 3]>,
    pub uvs: Vec<[f64; 2]>,
    pub uv_facets: Vec<[u32; 3]>,
    pub facet_atlas: Vec<u32>,
    pub atlases: Vec<Atlas>,
}

impl TexturedMesh {
    pub fn facet_count(&self) -> usize {
        self.facets.len()
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<(), MeshError> {
        if self.facets.len() != self.uv_facets.len() {
            return Err(MeshError::FacetCountMismatch {
                geometry: self.facets.len(),
                uv: self.uv_facets.len(),
            });
        }
        if self.facet_atlas.len() != self.facets.len() {
            return Err(MeshError::FacetCountMismatch {
                geometry: self.facets.len(),
                uv: self.facet_atlas.len(),
            });
        }
        for (k, (f, t)) in self.facets.iter().zip(&self.uv_facets).enumerate() {
            for &i in f {
                if i as usize >= self.positions.len() {
                    return Err(MeshError::IndexOutOfRange {
                        facet: k,
                        kind: "geometry",
                        index: i as usize,
                        count: self.positions.len(),
                    });
                }
            }
            for &i in t {
                if i as usize >= self.uvs.len() {
                    return Err(MeshError::IndexOutOfRange {
                        facet: k,
                        kind: "uv",
                        index: i as usize,
                        count: self.uvs.len(),
                    });
                }
            }
            let a = self.facet_atlas[k] as usize;
            if a >= self.atlases.len() {
                return Err(MeshError::AtlasOutOfRange {
                    facet: k,
                    atlas: a,
                    count: self.atlases.len(),
                });
            }
        }
        for (i, uv) in self.uvs.iter().enumerate() {
            if !(0.0..=1.0).contains(&uv[0]) || !(0.0..=1.0).contains(&uv[1]) {
                return Err(MeshError::UvOutOfRange {
                    index: i,
                    u: uv[0],
                    v: uv[1],
                });
            }
        }
        Ok(())
    }

    /// Texel position of a uv vertex inside the atlas of `facet`.
    #[inline]
    pub fn texel_of(&self, facet: usize, corner: usize) -> [f64; 2] {
        let atlas = &self.atlases[self.facet_atlas[facet] as usize];
        let uv = self.uvs[self.uv_facets[facet][corner] as usize];
        uv_to_texel(uv, atlas.width(), atlas.height())
    }

    /// Number of edges shared by more than two facets.
    pub fn non_manifold_edges(&self) -> usize {
        let mut uses: HashMap<(u32, u32), u32> = HashMap::new();
        for f in &self.facets {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *uses.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        uses.values().filter(|n| **n > 2).count()
    }
}

/// File uv (origin bottom-left, unit square) to texel pixel units (origin
/// top-left).
#[inline]
pub fn uv_to_texel(uv: [f64; 2], width: u32, height: u32) -> [f64; 2] {
    [uv[0] * width as f64, (1.0 - uv[1]) * height as f64]
}

/// Loads a bundle from an `.obj` file, or every bundle in a directory.
pub fn load_textured_mesh(path: &Path) -> Result<TexturedMesh, MeshError> {
    if !path.exists() {
        return Err(MeshError::Missing(path.to_path_buf()));
    }
    let mesh = if path.is_dir() {
        let mut tiles: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|source| MeshError::Io {
                path: path.to_path_buf(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj")))
            .collect();
        tiles.sort();
        if tiles.is_empty() {
            return Err(MeshError::EmptyDirectory(path.to_path_buf()));
        }
        let mut merged = TexturedMesh {
            positions: vec![],
            facets: vec![],
            uvs: vec![],
            uv_facets: vec![],
            facet_atlas: vec![],
            atlases: vec![],
        };
        for tile in &tiles {
            let mut part = load_obj(tile)?;
            let stem = tile
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            for atlas in &mut part.atlases {
                atlas.name = format!("{stem}_{}", atlas.name);
            }
            append(&mut merged, part);
        }
        merged
    } else {
        load_obj(path)?
    };
    mesh.validate()?;
    let bad = mesh.non_manifold_edges();
    if bad > 0 {
        log::warn!("{}: {bad} non-manifold edges", path.display());
    }
    Ok(mesh)
}

fn append(dst: &mut TexturedMesh, src: TexturedMesh) {
    let v0 = dst.positions.len() as u32;
    let t0 = dst.uvs.len() as u32;
    let a0 = dst.atlases.len() as u32;
    dst.positions.extend(src.positions);
    dst.uvs.extend(src.uvs);
    dst.facets
        .extend(src.facets.iter().map(|f| f.map(|i| i + v0)));
    dst.uv_facets
        .extend(src.uv_facets.iter().map(|f| f.map(|i| i + t0)));
    dst.facet_atlas.extend(src.facet_atlas.iter().map(|a| a + a0));
    dst.atlases.extend(src.atlases);
}

fn read_text(path: &Path) -> Result<String, MeshError> {
    fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Resolves an OBJ index (1-based, negative = relative to the end).
fn resolve_index(raw: &str, count: usize) -> Option<i64> {
    let i: i64 = raw.parse().ok()?;
    match i {
        0 => None,
        i if i > 0 => Some(i - 1),
        i => Some(count as i64 + i),
    }
}

fn load_obj(path: &Path) -> Result<TexturedMesh, MeshError> {
    let text = read_text(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let parse_err = |line: usize, msg: String| MeshError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    let mut facets = Vec::new();
    let mut uv_facets = Vec::new();
    let mut facet_material: Vec<usize> = Vec::new();
    let mut material_order: Vec<String> = Vec::new();
    let mut material_ids: HashMap<String, usize> = HashMap::new();
    let mut libraries: Vec<PathBuf> = Vec::new();
    let mut current: Option<usize> = None;
    let mut facets_without_uv = 0usize;

    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut tok = line.split_whitespace();
        let Some(key) = tok.next() else { continue };
        match key {
            "v" => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| parse_err(lineno, format!("bad vertex: {e}")))?;
                if c.len() != 3 {
                    return Err(parse_err(lineno, "vertex needs 3 coordinates".into()));
                }
                positions.push([c[0], c[1], c[2]]);
            }
            "vt" => {
                let c: Vec<f64> = tok
                    .take(2)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| parse_err(lineno, format!("bad texture coordinate: {e}")))?;
                if c.len() != 2 {
                    return Err(parse_err(lineno, "vt needs 2 coordinates".into()));
                }
                let index = uvs.len();
                let mut uv = [c[0], c[1]];
                for x in &mut uv {
                    if *x < -UV_EPSILON || *x > 1.0 + UV_EPSILON {
                        return Err(MeshError::UvOutOfRange {
                            index,
                            u: c[0],
                            v: c[1],
                        });
                    }
                    *x = x.clamp(0.0, 1.0);
                }
                uvs.push(uv);
            }
            "f" => {
                let mut corners = Vec::new();
                let mut has_uv = true;
                for t in tok {
                    let mut parts = t.split('/');
                    let vi = parts
                        .next()
                        .and_then(|s| resolve_index(s, positions.len()))
                        .ok_or_else(|| parse_err(lineno, format!("bad facet corner `{t}`")))?;
                    let ti = match parts.next() {
                        Some(s) if !s.is_empty() => Some(
                            resolve_index(s, uvs.len())
                                .ok_or_else(|| parse_err(lineno, format!("bad uv index `{t}`")))?,
                        ),
                        _ => None,
                    };
                    has_uv &= ti.is_some();
                    corners.push((vi, ti.unwrap_or(0)));
                }
                if corners.len() < 3 {
                    return Err(parse_err(lineno, "facet needs at least 3 corners".into()));
                }
                let facet = facets.len();
                let to_u32 = |i: i64, kind: &'static str, count: usize| {
                    u32::try_from(i).map_err(|_| MeshError::IndexOutOfRange {
                        facet,
                        kind,
                        index: i.max(0) as usize,
                        count,
                    })
                };
                // Polygons are fan-triangulated.
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    facets.push([
                        to_u32(tri[0].0, "geometry", positions.len())?,
                        to_u32(tri[1].0, "geometry", positions.len())?,
                        to_u32(tri[2].0, "geometry", positions.len())?,
                    ]);
                    if has_uv {
                        uv_facets.push([
                            to_u32(tri[0].1, "uv", uvs.len())?,
                            to_u32(tri[1].1, "uv", uvs.len())?,
                            to_u32(tri[2].1, "uv", uvs.len())?,
                        ]);
                    } else {
                        facets_without_uv += 1;
                    }
                    facet_material.push(current.unwrap_or(usize::MAX));
                }
            }
            "usemtl" => {
                let name = tok.collect::<Vec<_>>().join(" ");
                let next = material_ids.len();
                let id = *material_ids.entry(name.clone()).or_insert_with(|| {
                    material_order.push(name);
                    next
                });
                current = Some(id);
            }
            "mtllib" => {
                for lib in tok {
                    libraries.push(dir.join(lib));
                }
            }
            _ => {}
        }
    }

    if facets_without_uv > 0 {
        return Err(MeshError::FacetCountMismatch {
            geometry: facets.len(),
            uv: uv_facets.len(),
        });
    }

    let mut textures: HashMap<String, PathBuf> = HashMap::new();
    for lib in &libraries {
        let text = read_text(lib)?;
        let lib_dir = lib.parent().unwrap_or(Path::new("."));
        let mut name: Option<String> = None;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if let Some(rest) = line.strip_prefix("newmtl") {
                name = Some(rest.trim().to_string());
            } else if let Some(rest) = line.strip_prefix("map_Kd") {
                if let Some(n) = &name {
                    // Options such as `-s` are not supported; the file name is the last token.
                    if let Some(file) = rest.split_whitespace().last() {
                        textures.insert(n.clone(), lib_dir.join(file));
                    }
                }
            }
        }
    }

    // Facets emitted before any `usemtl` fall back to the only material, if unique.
    if facet_material.contains(&usize::MAX) {
        if material_order.is_empty() && textures.len() == 1 {
            let only = textures.keys().next().cloned().unwrap_or_default();
            material_ids.insert(only.clone(), 0);
            material_order.push(only);
        }
        if material_order.len() != 1 {
            return Err(MeshError::UnknownMaterial("<none>".into()));
        }
        for m in &mut facet_material {
            if *m == usize::MAX {
                *m = 0;
            }
        }
    }

    let mut atlases = Vec::with_capacity(material_order.len());
    for name in &material_order {
        let file = textures
            .get(name)
            .ok_or_else(|| MeshError::UnknownMaterial(name.clone()))?;
        let img = image::open(file).map_err(|source| MeshError::Texture {
            path: file.clone(),
            source,
        })?;
        atlases.push(Atlas {
            name: name.clone(),
            image: img.to_rgb8(),
        });
    }

    Ok(TexturedMesh {
        positions,
        facets,
        uvs,
        uv_facets,
        facet_atlas: facet_material.into_iter().map(|m| m as u32).collect(),
        atlases,
    })
}

fn material_name(atlas: &Atlas, index: usize) -> String {
    let cleaned: String = atlas
        .name
        .chars()
        .map(|c| if c.is_whitespace() || c == '#' { '_' } else { c })
        .collect();
    if cleaned.is_empty() {
        format!("atlas{index}")
    } else {
        cleaned
    }
}

/// Writes `path` (an `.obj` file), a sibling `.mtl` and one PNG per atlas.
pub fn save_textured_mesh(mesh: &TexturedMesh, path: &Path) -> Result<(), MeshError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mesh".into());
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |source| MeshError::Io { path: p, source }
    };

    let mut names: Vec<String> = Vec::with_capacity(mesh.atlases.len());
    for (i, atlas) in mesh.atlases.iter().enumerate() {
        let mut name = material_name(atlas, i);
        if names.contains(&name) {
            name = format!("{name}_{i}");
        }
        names.push(name);
    }

    let mtl_name = format!("{stem}.mtl");
    let mut mtl = String::new();
    for (i, atlas) in mesh.atlases.iter().enumerate() {
        let file = format!("{stem}_atlas{i}.png");
        let file_path = dir.join(&file);
        atlas
            .image
            .save_with_format(&file_path, image::ImageFormat::Png)
            .map_err(|source| MeshError::TextureWrite {
                path: file_path.clone(),
                source,
            })?;
        let _ = writeln!(mtl, "newmtl {}\nKd 1 1 1\nmap_Kd {file}\n", names[i]);
    }
    let mtl_path = dir.join(&mtl_name);
    fs::write(&mtl_path, mtl).map_err(io_err(&mtl_path))?;

    let mut obj = String::with_capacity(64 * (mesh.positions.len() + mesh.facets.len()));
    let _ = writeln!(obj, "mtllib {mtl_name}");
    for p in &mesh.positions {
        let _ = writeln!(obj, "v {} {} {}", p[0], p[1], p[2]);
    }
    for t in &mesh.uvs {
        let _ = writeln!(obj, "vt {} {}", t[0], t[1]);
    }
    let mut current = None;
    for (k, (f, t)) in mesh.facets.iter().zip(&mesh.uv_facets).enumerate() {
        let a = mesh.facet_atlas[k] as usize;
        if current != Some(a) {
            let _ = writeln!(obj, "usemtl {}", names[a]);
            current = Some(a);
        }
        let _ = writeln!(
            obj,
            "f {}/{} {}/{} {}/{}",
            f[0] + 1,
            t[0] + 1,
            f[1] + 1,
            t[1] + 1,
            f[2] + 1,
            t[2] + 1
        );
    }
    fs::write(path, obj).map_err(io_err(path))?;
    Ok(())
}
