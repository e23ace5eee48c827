mod common;

use std::collections::BTreeSet;

use common::bumpy;
use roadmend_core::integrate::{build_projection, rasterize, Roi, UpAxis};
use roadmend_core::mesh::TexturedMesh;
use roadmend_core::raster::MaskRaster;
use roadmend_core::remap::{collect_masked_facets, flatten_facets, RemapError};

const GSD: f64 = 0.1;

fn run(mesh: &TexturedMesh) -> (TexturedMesh, BTreeSet<u32>) {
    let roi = Roi::new([0.0, 0.0, -100.0], [10.0, 10.0, 100.0]);
    let proj = build_projection(roi, GSD, UpAxis::Z).unwrap();
    let r = rasterize(mesh, &proj);
    // Cells 3..7 in both directions.
    let mask = MaskRaster::from_fn(r.color.dims(), |x, y| (30..70).contains(&x) && (30..70).contains(&y));
    let masked = collect_masked_facets(&r.facets, &mask);
    let (out, report) = flatten_facets(mesh, &masked, &r.facets, &proj, 7).unwrap();
    assert_eq!(report.moved_vertices, 9);
    (out, masked)
}

fn check(base: impl Fn(f64, f64) -> f64 + Copy) {
    let (mesh, bump) = bumpy(base);
    let (out, masked) = run(&mesh);
    for &k in &bump {
        let p = out.positions[k];
        assert!((p[2] - base(p[0], p[1])).abs() <= 2.0 * GSD, "vertex {k}: {p:?}");
        assert_eq!((p[0], p[1]), (mesh.positions[k][0], mesh.positions[k][1]));
    }
    let touched: BTreeSet<u32> = masked.iter().flat_map(|f| mesh.facets[*f as usize]).collect();
    for k in 0..mesh.positions.len() {
        if !bump.contains(&k) {
            assert_eq!(out.positions[k].map(f64::to_bits), mesh.positions[k].map(f64::to_bits));
        }
        if !touched.contains(&(k as u32)) {
            assert!(!bump.contains(&k));
        }
    }
    assert_eq!(out.facets, mesh.facets);
    assert_eq!(out.uvs, mesh.uvs);
}

#[test]
fn bump_on_level_road_is_flattened() {
    check(|_, _| 5.0);
}

#[test]
fn bump_on_sloped_road_follows_the_slope() {
    check(|x, y| 5.0 + 0.05 * x - 0.02 * y);
}

#[test]
fn empty_selection_changes_nothing() {
    let (mesh, _) = bumpy(|_, _| 5.0);
    let roi = Roi::new([0.0, 0.0, -100.0], [10.0, 10.0, 100.0]);
    let proj = build_projection(roi, GSD, UpAxis::Z).unwrap();
    let r = rasterize(&mesh, &proj);
    let (out, report) = flatten_facets(&mesh, &BTreeSet::new(), &r.facets, &proj, 0).unwrap();
    assert_eq!(out, mesh);
    assert_eq!(report.moved_vertices, 0);
}

#[test]
fn everything_masked_has_no_support() {
    let (mesh, _) = bumpy(|_, _| 5.0);
    let roi = Roi::new([0.0, 0.0, -100.0], [10.0, 10.0, 100.0]);
    let proj = build_projection(roi, GSD, UpAxis::Z).unwrap();
    let r = rasterize(&mesh, &proj);
    let all = collect_masked_facets(&r.facets, &MaskRaster::from_fn(r.color.dims(), |_, _| true));
    assert_eq!(all.len(), mesh.facet_count());
    assert!(matches!(
        flatten_facets(&mesh, &all, &r.facets, &proj, 0),
        Err(RemapError::NoGroundSupport(_))
    ));
}
