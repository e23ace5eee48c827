#![allow(dead_code)]

use roadmend_core::raster::{ColorRaster, Dims, MaskRaster};

pub const STRIPE_A: [u8; 3] = [220, 210, 190];
pub const STRIPE_B: [u8; 3] = [70, 75, 80];

/// Stripes along 45 degrees (constant along x = y), 16 px period along x.
pub fn stripes(dims: Dims) -> ColorRaster {
    ColorRaster::from_fn(dims, |x, y| {
        if (x as i64 - y as i64).rem_euclid(16) < 8 {
            STRIPE_A
        } else {
            STRIPE_B
        }
    })
}

pub fn square_hole(dims: Dims, x0: usize, y0: usize, size: usize) -> MaskRaster {
    MaskRaster::from_fn(dims, |x, y| (x0..x0 + size).contains(&x) && (y0..y0 + size).contains(&y))
}

/// Copy of `raster` with the void painted a flat color, so nothing leaks.
pub fn blank_void(raster: &ColorRaster, mask: &MaskRaster) -> ColorRaster {
    let mut out = raster.clone();
    for (p, v) in out.pixels_mut().iter_mut().zip(mask.bits()) {
        if *v {
            *p = [255, 0, 255];
        }
    }
    out
}

use image::{Rgb, RgbImage};
use rand::Rng;
use roadmend_core::mesh::{Atlas, TexturedMesh};

/// Flat `n x n` quad grid over `[0, size]^2` at height `z`, textured with one
/// atlas so that ground `(x, y)` maps to texel `(x, y) * atlas_width / size`.
pub fn flat_grid(n: usize, size: f64, z: f64, atlas: RgbImage) -> TexturedMesh {
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            let (x, y) = (i as f64 * size / n as f64, j as f64 * size / n as f64);
            positions.push([x, y, z]);
            uvs.push([x / size, 1.0 - y / size]);
        }
    }
    let id = |i: usize, j: usize| (j * (n + 1) + i) as u32;
    let mut facets = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            facets.push([a, b, c]);
            facets.push([a, c, d]);
        }
    }
    TexturedMesh {
        uv_facets: facets.clone(),
        facet_atlas: vec![0; facets.len()],
        positions,
        facets,
        uvs,
        atlases: vec![Atlas {
            name: "road".into(),
            image: atlas,
        }],
    }
}

pub fn noise_image<R: Rng>(w: u32, h: u32, rng: &mut R) -> RgbImage {
    RgbImage::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
}

/// Random triangle soup over `[0, extent]^2` with random uvs into two atlases.
pub fn random_mesh<R: Rng>(facets: usize, extent: f64, rng: &mut R) -> TexturedMesh {
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    let mut fs = Vec::new();
    let mut uf = Vec::new();
    let mut fa = Vec::new();
    for k in 0..facets {
        let base = positions.len() as u32;
        let c = [rng.random_range(0.0..extent), rng.random_range(0.0..extent)];
        for _ in 0..3 {
            positions.push([
                c[0] + rng.random_range(-3.0..3.0),
                c[1] + rng.random_range(-3.0..3.0),
                rng.random_range(0.0..4.0),
            ]);
            uvs.push([rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]);
        }
        fs.push([base, base + 1, base + 2]);
        uf.push([base, base + 1, base + 2]);
        fa.push((k % 2) as u32);
    }
    TexturedMesh {
        positions,
        facets: fs,
        uvs,
        uv_facets: uf,
        facet_atlas: fa,
        atlases: vec![
            Atlas {
                name: "a".into(),
                image: noise_image(64, 48, rng),
            },
            Atlas {
                name: "b".into(),
                image: noise_image(40, 40, rng),
            },
        ],
    }
}

use roadmend_core::regularity::Offset;

/// `n` offsets: `1 - outliers` of them along `theta` (lengths 10..200, up to
/// 1 px perpendicular jitter), the rest uniform in a 400 px square.
pub fn planted_offsets<R: Rng>(theta: f64, n: usize, outliers: f64, rng: &mut R) -> Vec<Offset> {
    let n_out = (n as f64 * outliers).round() as usize;
    let (s, c) = theta.sin_cos();
    let mut v: Vec<Offset> = (0..n - n_out)
        .map(|_| {
            let t = rng.random_range(10.0..200.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let j = rng.random_range(-1.0..1.0);
            Offset::new(t * c - j * s, t * s + j * c)
        })
        .collect();
    v.extend((0..n_out).map(|_| Offset::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0))));
    v
}

/// Opaque disks of random colors on gray, wrapping horizontally with period `tile`.
pub fn disk_texture<R: Rng>(dims: Dims, tile: usize, disks: usize, rng: &mut R) -> ColorRaster {
    let spots: Vec<(f64, f64, f64, [u8; 3])> = (0..disks)
        .map(|_| {
            (
                rng.random_range(0.0..tile as f64),
                rng.random_range(0.0..dims.height as f64),
                rng.random_range(2.0..6.0),
                [rng.random(), rng.random(), rng.random()],
            )
        })
        .collect();
    ColorRaster::from_fn(dims, |x, y| {
        let (px, py) = ((x % tile) as f64 + 0.5, y as f64 + 0.5);
        for &(cx, cy, r, col) in &spots {
            let dx = (px - cx).abs().min(tile as f64 - (px - cx).abs());
            if dx * dx + (py - cy) * (py - cy) <= r * r {
                return col;
            }
        }
        [128, 128, 128]
    })
}

use roadmend_core::complete::{
    build_priority_queue, fill_from_boundary, patchmatch_pass, Canvas, CompletionParams, Domain, EnergyModel,
    NNField, PatchWeights,
};
use roadmend_core::regularity::EdgeMap;

/// 45 degree stripes with uniform noise of `amp` gray levels.
pub fn noisy_stripes<R: Rng>(dims: Dims, amp: i32, rng: &mut R) -> ColorRaster {
    let mut r = stripes(dims);
    for p in r.pixels_mut() {
        let n = rng.random_range(-amp..=amp);
        *p = p.map(|c| (c as i32 + n).clamp(0, 255) as u8);
    }
    r
}

/// Lowest-energy valid offset at every void pixel, by trying all sources.
pub fn exhaustive_optimum(model: &EnergyModel<'_>) -> Vec<((usize, usize), [i32; 2], f64)> {
    let domain = model.domain;
    let d = domain.dims();
    domain
        .void_pixels()
        .into_iter()
        .map(|p| {
            let mut best = ([0, 0], f64::INFINITY);
            for y in 0..d.height {
                for x in 0..d.width {
                    if !domain.is_source(x as i64, y as i64) {
                        continue;
                    }
                    let v = [x as i32 - p.0 as i32, y as i32 - p.1 as i32];
                    let e = model.energy(p, v).total;
                    if e < best.1 {
                        best = (v, e);
                    }
                }
            }
            (p, best.0, best.1)
        })
        .collect()
}

/// Search passes on a fixed canvas until one adopts nothing (at most `max`).
/// Returns the number of passes and the total violations.
pub fn converge<R: Rng>(nnf: &mut NNField, model: &EnergyModel<'_>, max: usize, rng: &mut R) -> (usize, usize) {
    let edges = EdgeMap::empty(model.domain.dims());
    let queue = build_priority_queue(&edges, model.domain, model.params, 1);
    let mut violations = 0;
    for pass in 1..=max {
        let s = patchmatch_pass(nnf, model, &queue, rng);
        violations += s.violations;
        if s.adopted == 0 {
            return (pass, violations);
        }
    }
    (max, violations)
}

/// Canvas with the void pre-filled from its boundary, as at the coarsest level.
pub fn boundary_canvas(raster: &ColorRaster, domain: &Domain) -> Canvas {
    fill_from_boundary(&Canvas::from_raster(raster), domain)
}

pub fn weights(params: &CompletionParams) -> PatchWeights {
    PatchWeights::for_params(params)
}

/// Near-optimality instance: a 48 x 48 noisy stripe image with a 10 x 10
/// hole is completed, then the search runs on the completed canvas until it
/// stops adopting. Returns (search energy, exhaustive energy, violations).
pub fn near_optimality(seed: u64) -> (f64, f64, usize) {
    use rand::SeedableRng;
    use roadmend_core::complete::complete;
    use roadmend_core::regularity::{prewitt_edges, OrientationSet};

    let dims = Dims::new(48, 48);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000 + seed);
    let raster = noisy_stripes(dims, 10, &mut rng);
    let mask = square_hole(dims, rng.random_range(8..30), rng.random_range(8..30), 10);
    let domain = Domain::new(mask.clone(), raster.validity());
    let params = CompletionParams {
        seed,
        ..Default::default()
    };
    let theta = OrientationSet::from_angles(&[std::f64::consts::FRAC_PI_4, 3.0 * std::f64::consts::FRAC_PI_4]);
    let done = complete(&raster, &mask, &prewitt_edges(&raster, &mask, 40.0), &theta, &params)
        .expect("instance completes");
    let canvas = Canvas::from_raster(&done.raster);
    let w = weights(&params);
    let angles = theta.angles();
    let model = EnergyModel::new(&canvas, &domain, &angles, &params, &w);
    let best: f64 = exhaustive_optimum(&model).iter().map(|r| r.2).sum();
    let mut nnf = done.nnf;
    let (_, violations) = converge(&mut nnf, &model, 500, &mut rng);
    let got = domain
        .void_pixels()
        .iter()
        .map(|&p| model.energy(p, nnf.get(p.0, p.1).expect("void pixel has an offset")).total)
        .sum();
    (got, best, violations)
}

/// Road scene on disk: a 25.6 m square of 45 degree stripes (one texel per
/// 0.1 m), with a raised, painted vehicle around pixels 96..128.
pub struct Scene {
    pub mesh: std::path::PathBuf,
    pub boxes: std::path::PathBuf,
    pub truth: RgbImage,
    /// Indices of the raised vehicle vertices.
    pub raised: Vec<usize>,
}

pub const SCENE_GSD: f64 = 0.1;
pub const VEHICLE_BOX: [f64; 4] = [88.0, 88.0, 136.0, 136.0];

pub fn vehicle_scene(dir: &std::path::Path) -> Scene {
    let truth = stripes(Dims::new(256, 256)).to_image();
    let mut atlas = truth.clone();
    for y in 92..132 {
        for x in 92..132 {
            let c = if (100..124).contains(&x) && (98..126).contains(&y) { [30, 40, 160] } else { [20, 20, 20] };
            atlas.put_pixel(x, y, Rgb(c));
        }
    }
    let mut mesh = flat_grid(32, 25.6, 0.0, atlas);
    let mut raised = Vec::new();
    for (k, p) in mesh.positions.iter_mut().enumerate() {
        let (i, j) = (k % 33, k / 33);
        if (12..=16).contains(&i) && (12..=16).contains(&j) {
            p[2] = 1.5;
            raised.push(k);
        }
    }
    let mesh_path = dir.join("scene").join("mesh.obj");
    std::fs::create_dir_all(mesh_path.parent().unwrap()).unwrap();
    roadmend_core::mesh::save_textured_mesh(&mesh, &mesh_path).unwrap();
    let boxes = dir.join("boxes.json");
    let [x0, y0, x1, y1] = VEHICLE_BOX;
    std::fs::write(
        &boxes,
        format!(
            r#"{{"image": {{"width": 256, "height": 256}}, "boxes": [{{"x_min": {x0}, "y_min": {y0}, "x_max": {x1}, "y_max": {y1}, "score": 0.9, "label": "vehicle"}}]}}"#
        ),
    )
    .unwrap();
    Scene {
        mesh: mesh_path,
        boxes,
        truth,
        raised,
    }
}

pub fn scene_config(scene: &Scene, out: &std::path::Path, seed: u64) -> std::collections::BTreeMap<String, String> {
    let mut m = std::collections::BTreeMap::new();
    m.insert("input".into(), scene.mesh.display().to_string());
    m.insert("gsd".into(), SCENE_GSD.to_string());
    m.insert("bboxes".into(), scene.boxes.display().to_string());
    m.insert("out".into(), out.display().to_string());
    m.insert("seed".into(), seed.to_string());
    m
}

/// Every file below `dir` with its bytes, keyed by relative path.
pub fn tree_bytes(dir: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(root: &std::path::Path, d: &std::path::Path, out: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// 10 x 10 m grid of 1 m cells on `base(x, y)`, with the 3 x 3 vertices
/// around the center raised by 0.5. Returns the mesh and the raised vertices.
pub fn bumpy(base: impl Fn(f64, f64) -> f64) -> (TexturedMesh, Vec<usize>) {
    let mut mesh = flat_grid(10, 10.0, 0.0, RgbImage::new(100, 100));
    let mut bump = Vec::new();
    for (k, p) in mesh.positions.iter_mut().enumerate() {
        p[2] = base(p[0], p[1]);
        let (i, j) = (k % 11, k / 11);
        if (4..=6).contains(&i) && (4..=6).contains(&j) {
            p[2] += 0.5;
            bump.push(k);
        }
    }
    (mesh, bump)
}
