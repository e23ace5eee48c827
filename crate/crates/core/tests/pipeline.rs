mod common;

use common::{scene_config, tree_bytes, vehicle_scene, SCENE_GSD, VEHICLE_BOX};
use roadmend_core::eval::psnr;
use roadmend_core::mask::{boxes_to_mask, BoundingBox};
use roadmend_core::mesh::load_textured_mesh;
use roadmend_core::pipeline::{
    parse_config_text, read_config_file, run_pipeline, ConfigError, PipelineConfig, PipelineError, MESH_FILE,
    PARAMS_FILE, REPORT_FILE,
};
use roadmend_core::raster::{ColorRaster, Dims};

#[test]
fn vehicle_is_removed_and_flattened() {
    let dir = tempfile::tempdir().unwrap();
    let scene = vehicle_scene(dir.path());
    let out = dir.path().join("out");
    let mut settings = scene_config(&scene, &out, 1);
    let truth_png = dir.path().join("truth.png");
    scene.truth.save(&truth_png).unwrap();
    settings.insert("eval-ref".into(), truth_png.display().to_string());
    settings.insert("dump-debug".into(), "true".into());
    let report = run_pipeline(&PipelineConfig::from_map(&settings).unwrap()).unwrap();

    assert_eq!((report.width, report.height), (256, 256));
    assert_eq!(report.boxes, Some(1));
    let [x0, y0, x1, y1] = VEHICLE_BOX;
    let mask = boxes_to_mask(&[BoundingBox::new(x0, y0, x1, y1)], Dims::new(256, 256), 0.1).unwrap();
    assert_eq!(report.void_pixels, mask.void_count());
    assert_eq!(report.completion.as_ref().unwrap().violations(), 0);

    let mesh = load_textured_mesh(&out.join(MESH_FILE)).unwrap();
    let atlas = ColorRaster::from_image(&mesh.atlases[0].image);
    let truth = ColorRaster::from_image(&scene.truth);
    let region_psnr = psnr(&atlas, &truth, Some(&mask)).unwrap();
    assert!(region_psnr >= 25.0, "atlas PSNR in the vehicle region: {region_psnr:.2}");
    // Texels outside the void keep their bytes.
    for y in 0..256 {
        for x in 0..256 {
            if !mask.is_void(x, y) {
                assert_eq!(atlas.get(x, y), truth.get(x, y));
            }
        }
    }
    for &k in &scene.raised {
        assert!(mesh.positions[k][2].abs() <= 2.0 * SCENE_GSD, "vertex {k}: {:?}", mesh.positions[k]);
    }

    for f in ["rendered.png", "boxes.png", "masked.png", "completed.png", "eval.csv", PARAMS_FILE, REPORT_FILE] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert!(out.join("debug").join("level0_nnf.png").is_file());
    let csv = std::fs::read_to_string(out.join("eval.csv")).unwrap();
    assert!(csv.starts_with("dataset,method,psnr,ssim\nrun,full,"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(json["params"]["patch-size"], "21");
    assert_eq!(json["params"]["lambda1"], "0.0005");
    assert_eq!(json["seed"], 1);
    assert!(json["stage_seeds"]["complete"].is_u64());
    assert!(json["regularity"]["directions_deg"].is_array());
}

#[test]
fn empty_box_list_leaves_the_mesh_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let scene = vehicle_scene(dir.path());
    std::fs::write(&scene.boxes, r#"{"image": {"width": 256, "height": 256}, "boxes": []}"#).unwrap();
    let out = dir.path().join("out");
    let report = run_pipeline(&PipelineConfig::from_map(&scene_config(&scene, &out, 0)).unwrap()).unwrap();
    assert_eq!(report.void_pixels, 0);
    assert!(report.notes.iter().any(|n| n == "0 void pixels"));
    let input = tree_bytes(scene.mesh.parent().unwrap());
    let output = tree_bytes(&out.join("mesh"));
    assert_eq!(input, output);
}

#[test]
fn same_seed_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scene = vehicle_scene(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_pipeline(&PipelineConfig::from_map(&scene_config(&scene, &a, 5)).unwrap()).unwrap();
    run_pipeline(&PipelineConfig::from_map(&scene_config(&scene, &b, 5)).unwrap()).unwrap();
    let strip = |mut t: std::collections::BTreeMap<String, Vec<u8>>| {
        // Timings and the echoed output path legitimately differ.
        t.remove(REPORT_FILE);
        t.remove(PARAMS_FILE);
        t
    };
    assert_eq!(strip(tree_bytes(&a)), strip(tree_bytes(&b)));
}

#[test]
fn params_file_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let scene = vehicle_scene(dir.path());
    let first = dir.path().join("first");
    let mut settings = scene_config(&scene, &first, 77);
    settings.insert("iters".into(), "3".into());
    settings.insert("synthesis".into(), "copy".into());
    run_pipeline(&PipelineConfig::from_map(&settings).unwrap()).unwrap();

    let mut replay = read_config_file(&first.join(PARAMS_FILE)).unwrap();
    assert_eq!(replay["iters"], "3");
    assert_eq!(replay["edge-threshold"], "40");
    let second = dir.path().join("second");
    replay.insert("out".into(), second.display().to_string());
    run_pipeline(&PipelineConfig::from_map(&replay).unwrap()).unwrap();
    for f in ["completed.png", "mesh/mesh.obj", "mesh/mesh_atlas0.png"] {
        assert_eq!(std::fs::read(first.join(f)).unwrap(), std::fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn inverted_roi_is_a_config_error() {
    let text = "input = nowhere.obj\nout = o\ngsd = 0.1\nbboxes = b.json\nroi = 10,0,5,8\n";
    let err = PipelineConfig::from_map(&parse_config_text(text).unwrap()).unwrap_err();
    assert!(matches!(err, ConfigError::BadRoi(_)));
    let two_sources = "input = a.obj\nout = o\ngsd = 0.1\nbboxes = b.json\nmask = m.png\n";
    assert!(matches!(
        PipelineConfig::from_map(&parse_config_text(two_sources).unwrap()),
        Err(ConfigError::MaskSourceCount(2))
    ));
}

#[test]
fn failures_leave_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let scene = vehicle_scene(dir.path());
    std::fs::write(&scene.boxes, r#"{"image": {"width": 100, "height": 256}, "boxes": []}"#).unwrap();
    let out = dir.path().join("runs").join("out");
    let err = run_pipeline(&PipelineConfig::from_map(&scene_config(&scene, &out, 0)).unwrap()).unwrap_err();
    assert!(matches!(err, PipelineError::Stage { stage: "mask", .. }), "{err}");
    assert!(!out.exists());
    let leftovers: Vec<_> = std::fs::read_dir(dir.path().join("runs")).unwrap().collect();
    assert!(leftovers.is_empty());

    let mut settings = scene_config(&scene, &out, 0);
    settings.insert("roi".into(), "100,100,120,120".into());
    let err = run_pipeline(&PipelineConfig::from_map(&settings).unwrap()).unwrap_err();
    assert!(matches!(err, PipelineError::Stage { stage: "integrate", .. }), "{err}");
}

#[cfg(unix)]
#[test]
fn detector_command_supplies_the_boxes() {
    use std::os::unix::fs::PermissionsExt;

    let dir = tempfile::tempdir().unwrap();
    let scene = vehicle_scene(dir.path());
    let script = dir.path().join("detect.sh");
    std::fs::write(
        &script,
        format!(
            "#!/bin/sh\n# usage: detect.sh <image> --out <json>\n[ -f \"$1\" ] || exit 3\n[ \"$2\" = --out ] || exit 4\ncp '{}' \"$3\"\n",
            scene.boxes.display()
        ),
    )
    .unwrap();
    std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
    let out = dir.path().join("out");
    let mut settings = scene_config(&scene, &out, 2);
    settings.remove("bboxes");
    settings.insert("detect-cmd".into(), script.display().to_string());
    settings.insert("iters".into(), "2".into());
    let report = run_pipeline(&PipelineConfig::from_map(&settings).unwrap()).unwrap();
    assert_eq!(report.boxes, Some(1));
    assert!(report.void_pixels > 0);

    settings.insert("detect-cmd".into(), "false".into());
    let err = run_pipeline(&PipelineConfig::from_map(&settings).unwrap()).unwrap_err();
    assert!(matches!(err, PipelineError::Stage { stage: "mask", .. }));
}

#[test]
fn mask_image_and_y_up_input() {
    let dir = tempfile::tempdir().unwrap();
    let scene = vehicle_scene(dir.path());
    // Same scene with y as the up axis: (x, y, z) -> (x, z, y).
    let mut mesh = load_textured_mesh(&scene.mesh).unwrap();
    for p in &mut mesh.positions {
        *p = [p[0], p[2], p[1]];
    }
    let y_up = dir.path().join("yup").join("mesh.obj");
    std::fs::create_dir_all(y_up.parent().unwrap()).unwrap();
    roadmend_core::mesh::save_textured_mesh(&mesh, &y_up).unwrap();
    let mask_png = dir.path().join("mask.png");
    image::GrayImage::from_fn(256, 256, |x, y| {
        image::Luma([if (90..134).contains(&x) && (90..134).contains(&y) { 255 } else { 0 }])
    })
    .save(&mask_png)
    .unwrap();
    let out = dir.path().join("out");
    let text = format!(
        "input = {}\nout = {}\ngsd = 0.1\nup-axis = y\nmask = {}\niters = 2\n",
        y_up.display(),
        out.display(),
        mask_png.display()
    );
    let report = run_pipeline(&PipelineConfig::from_map(&parse_config_text(&text).unwrap()).unwrap()).unwrap();
    assert_eq!(report.void_pixels, 44 * 44);
    assert_eq!(report.boxes, None);
    let result = load_textured_mesh(&out.join(MESH_FILE)).unwrap();
    for &k in &scene.raised {
        assert!(result.positions[k][1].abs() <= 2.0 * SCENE_GSD);
    }
}
