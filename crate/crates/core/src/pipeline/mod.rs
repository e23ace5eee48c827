//! End-to-end run: rasterize, mask, estimate regularity, complete,
//! write back into the atlases, flatten and save.

pub mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::complete::{complete, CompletionStats};
use crate::eval::{evaluate, QualityReport, CSV_HEADER};
use crate::integrate::{build_projection, rasterize, Roi};
use crate::mask::{boxes_to_mask, load_mask, BoxFile};
use crate::mesh::{load_textured_mesh, save_textured_mesh};
use crate::raster::{ColorRaster, MaskRaster};
use crate::regularity::{estimate_orientations, prewitt_edges, BlobBackend, Evidence};
use crate::remap::{build_texel_map, collect_masked_facets, deintegrate, flatten_facets, DeintegrateStats, FlattenReport};
use crate::seed::stage_seed;

pub use config::{parse_config_text, read_config_file, ConfigError, MaskSource, PipelineConfig, RoiSpec};

/// Name of the mesh inside the output bundle.
pub const MESH_FILE: &str = "mesh/mesh.obj";
pub const RENDERED_FILE: &str = "rendered.png";
pub const BOXES_FILE: &str = "boxes.png";
pub const MASKED_FILE: &str = "masked.png";
pub const COMPLETED_FILE: &str = "completed.png";
pub const REPORT_FILE: &str = "report.json";
pub const PARAMS_FILE: &str = "params.conf";

const OUTLINE: [u8; 3] = [255, 0, 0];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

fn stage_err<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularitySummary {
    pub keypoints: usize,
    pub matches: usize,
    pub evidence: Evidence,
    /// Guidance directions in degrees.
    pub directions_deg: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub full: QualityReport,
    pub mask: Option<QualityReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    /// Every effective setting, defaults included.
    pub params: BTreeMap<String, String>,
    pub seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    pub roi: Roi,
    pub width: usize,
    pub height: usize,
    pub covered_pixels: usize,
    pub boxes: Option<usize>,
    pub void_pixels: usize,
    pub regularity: Option<RegularitySummary>,
    pub completion: Option<CompletionStats>,
    pub deintegrate: Option<DeintegrateStats>,
    pub masked_facets: usize,
    pub flatten: Option<FlattenReport>,
    pub eval: Option<EvalSummary>,
    pub notes: Vec<String>,
    /// Wall time per stage in milliseconds.
    pub timings_ms: BTreeMap<String, u128>,
}

struct Timer(BTreeMap<String, u128>);

impl Timer {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.0.insert(stage.to_string(), t.elapsed().as_millis());
        out
    }
}

/// Rendered image with the void outline drawn in red.
fn outline(raster: &ColorRaster, mask: &MaskRaster) -> ColorRaster {
    let mut out = raster.clone();
    let d = raster.dims();
    for y in 0..d.height {
        for x in 0..d.width {
            if !mask.is_void(x, y) {
                continue;
            }
            let edge = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)].iter().any(|(dx, dy)| {
                let (qx, qy) = (x as i64 + dx, y as i64 + dy);
                !d.contains(qx, qy) || !mask.is_void(qx as usize, qy as usize)
            });
            if edge {
                out.pixels_mut()[d.index(x, y)] = OUTLINE;
            }
        }
    }
    out
}

fn masked_view(raster: &ColorRaster, mask: &MaskRaster) -> ColorRaster {
    let mut out = raster.clone();
    for (px, void) in out.pixels_mut().iter_mut().zip(mask.bits()) {
        if *void {
            *px = [0, 0, 0];
        }
    }
    out
}

/// Runs the external detector as `<cmd...> <image> --out <json>`.
fn run_detector(cmd: &str, image: &Path, json: &Path) -> Result<BoxFile, String> {
    let mut parts = cmd.split_whitespace();
    let program = parts.next().ok_or("empty detector command")?;
    let status = std::process::Command::new(program)
        .args(parts)
        .arg(image)
        .arg("--out")
        .arg(json)
        .status()
        .map_err(|e| format!("cannot start `{program}`: {e}"))?;
    if !status.success() {
        return Err(format!("detector exited with {status}"));
    }
    BoxFile::load(json).map_err(|e| e.to_string())
}

/// Moves the staged outputs into `out`, replacing entries of the same name.
fn publish(staging: &Path, out: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(staging)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for src in entries {
        let dst = out.join(src.file_name().expect("directory entry has a name"));
        if dst.is_dir() {
            std::fs::remove_dir_all(&dst)?;
        } else if dst.exists() {
            std::fs::remove_file(&dst)?;
        }
        std::fs::rename(&src, &dst)?;
    }
    Ok(())
}

/// Executes every stage. Outputs are staged next to `config.out` and only
/// moved into place when all stages succeed.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    let parent = match config.out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent).map_err(stage_err("output"))?;
    let staging = tempfile::Builder::new()
        .prefix(".roadmend-")
        .tempdir_in(&parent)
        .map_err(stage_err("output"))?;
    let report = run_stages(config, staging.path())?;
    publish(staging.path(), &config.out).map_err(stage_err("output"))?;
    Ok(report)
}

fn run_stages(config: &PipelineConfig, stage_dir: &Path) -> Result<RunReport, PipelineError> {
    let mut timer = Timer(BTreeMap::new());
    let mut notes = Vec::new();
    let stage_seeds: BTreeMap<String, u64> = ["regularity", "complete", "flatten"]
        .iter()
        .map(|s| (s.to_string(), stage_seed(config.seed, s)))
        .collect();

    let mesh = timer.time("load", || load_textured_mesh(&config.input).map_err(stage_err("load")))?;
    let roi = match &config.roi {
        Some(r) => r.to_roi(config.up_axis, &mesh),
        None => Roi::bounding(&mesh).ok_or_else(|| stage_err("integrate")("mesh has no vertices"))?,
    };
    let proj = build_projection(roi, config.gsd, config.up_axis).map_err(stage_err("integrate"))?;
    let rendered = timer.time("integrate", || rasterize(&mesh, &proj));
    if rendered.is_empty() {
        return Err(stage_err("integrate")("no geometry inside the roi"));
    }
    let raster = rendered.color;
    let dims = raster.dims();
    raster
        .save_png(&stage_dir.join(RENDERED_FILE))
        .map_err(stage_err("output"))?;

    let mut boxes = None;
    let mask = timer.time("mask", || -> Result<MaskRaster, PipelineError> {
        let from_boxes = |f: BoxFile| {
            if f.dims() != dims {
                return Err(stage_err("mask")(format!(
                    "box file is for a {}x{} image, rendered raster is {}x{}",
                    f.image.width, f.image.height, dims.width, dims.height
                )));
            }
            boxes_to_mask(&f.boxes, dims, config.dilation)
                .map(|m| (m, f.boxes.len()))
                .map_err(stage_err("mask"))
        };
        let (m, n) = match &config.mask {
            MaskSource::Image(p) => (load_mask(p, dims).map_err(stage_err("mask"))?, None),
            MaskSource::Boxes(p) => {
                let (m, n) = from_boxes(BoxFile::load(p).map_err(stage_err("mask"))?)?;
                (m, Some(n))
            }
            MaskSource::Command(cmd) => {
                let scratch = tempfile::tempdir().map_err(stage_err("mask"))?;
                let json = scratch.path().join("boxes.json");
                let f = run_detector(cmd, &stage_dir.join(RENDERED_FILE), &json).map_err(stage_err("mask"))?;
                let (m, n) = from_boxes(f)?;
                (m, Some(n))
            }
        };
        boxes = n;
        Ok(m)
    })?;
    let void_pixels = mask.void_count();
    outline(&raster, &mask)
        .save_png(&stage_dir.join(BOXES_FILE))
        .map_err(stage_err("output"))?;
    masked_view(&raster, &mask)
        .save_png(&stage_dir.join(MASKED_FILE))
        .map_err(stage_err("output"))?;

    let mesh_path = stage_dir.join(MESH_FILE);
    std::fs::create_dir_all(mesh_path.parent().expect("mesh path has a parent")).map_err(stage_err("output"))?;

    let mut report = RunReport {
        params: config.to_map(),
        seed: config.seed,
        stage_seeds: stage_seeds.clone(),
        roi,
        width: dims.width,
        height: dims.height,
        covered_pixels: rendered.facets.covered_count(),
        boxes,
        void_pixels,
        regularity: None,
        completion: None,
        deintegrate: None,
        masked_facets: 0,
        flatten: None,
        eval: None,
        notes: vec![],
        timings_ms: BTreeMap::new(),
    };

    let completed = if void_pixels == 0 {
        notes.push("0 void pixels".to_string());
        save_textured_mesh(&mesh, &mesh_path).map_err(stage_err("save"))?;
        raster.clone()
    } else {
        let edges = prewitt_edges(&raster, &mask, config.completion.edge_threshold);
        let reg = timer.time("regularity", || {
            estimate_orientations(&raster, &mask, &BlobBackend::default(), stage_seeds["regularity"])
        });
        report.regularity = Some(RegularitySummary {
            keypoints: reg.keypoints,
            matches: reg.matches,
            evidence: reg.evidence,
            directions_deg: reg.orientations.angles().iter().map(|a| a.to_degrees()).collect(),
        });
        let params = crate::complete::CompletionParams {
            seed: stage_seeds["complete"],
            keep_levels: config.dump_debug,
            ..config.completion.clone()
        };
        let done = timer.time("complete", || {
            complete(&raster, &mask, &edges, &reg.orientations, &params).map_err(stage_err("complete"))
        })?;
        if config.dump_debug {
            let dbg = stage_dir.join("debug");
            std::fs::create_dir_all(&dbg).map_err(stage_err("output"))?;
            edges.to_image().save(dbg.join("edges.png")).map_err(stage_err("output"))?;
            mask.to_image().save(dbg.join("mask.png")).map_err(stage_err("output"))?;
            for s in &done.snapshots {
                s.image
                    .save_png(&dbg.join(format!("level{}_image.png", s.level)))
                    .map_err(stage_err("output"))?;
                s.nnf
                    .to_image()
                    .save(dbg.join(format!("level{}_nnf.png", s.level)))
                    .map_err(stage_err("output"))?;
            }
        }
        report.completion = Some(done.stats.clone());

        let (out_mesh, dstats, freport, masked_count) = timer.time("deintegrate", || -> Result<_, PipelineError> {
            let tmap = build_texel_map(&mesh, &rendered.facets, &proj);
            let (edited, stats) = deintegrate(&done.raster, &mask, &tmap, &mesh).map_err(stage_err("deintegrate"))?;
            let masked = collect_masked_facets(&rendered.facets, &mask);
            let (flat, freport) = flatten_facets(&edited, &masked, &rendered.facets, &proj, stage_seeds["flatten"])
                .map_err(stage_err("flatten"))?;
            Ok((flat, stats, freport, masked.len()))
        })?;
        report.deintegrate = Some(dstats);
        report.flatten = Some(freport);
        report.masked_facets = masked_count;
        timer.time("save", || save_textured_mesh(&out_mesh, &mesh_path).map_err(stage_err("save")))?;
        done.raster
    };
    completed
        .save_png(&stage_dir.join(COMPLETED_FILE))
        .map_err(stage_err("output"))?;

    if let Some(reference) = &config.eval_ref {
        let reference = ColorRaster::load(reference).map_err(stage_err("eval"))?;
        let full = evaluate(&completed, &reference, None).map_err(stage_err("eval"))?;
        let in_mask = if void_pixels > 0 {
            Some(evaluate(&completed, &reference, Some(&mask)).map_err(stage_err("eval"))?)
        } else {
            None
        };
        let mut csv = format!("{CSV_HEADER}\n{}\n", full.csv_row("run", "full"));
        if let Some(m) = &in_mask {
            csv.push_str(&format!("{}\n", m.csv_row("run", "mask")));
        }
        std::fs::write(stage_dir.join("eval.csv"), csv).map_err(stage_err("output"))?;
        report.eval = Some(EvalSummary { full, mask: in_mask });
    }

    report.notes = notes;
    report.timings_ms = timer.0;
    std::fs::write(stage_dir.join(PARAMS_FILE), config.to_config_text()).map_err(stage_err("output"))?;
    let json = serde_json::to_string_pretty(&report).map_err(stage_err("output"))?;
    std::fs::write(stage_dir.join(REPORT_FILE), json).map_err(stage_err("output"))?;
    log::info!("{} void pixels completed, outputs staged", void_pixels);
    Ok(report)
}

/// Compares two images (optionally inside a mask image) and returns one CSV
/// row `dataset,method,psnr,ssim`.
pub fn run_eval(
    completed: &Path,
    reference: &Path,
    region: Option<&Path>,
    dataset: &str,
    method: &str,
) -> Result<String, PipelineError> {
    let a = ColorRaster::load(completed).map_err(stage_err("eval"))?;
    let b = ColorRaster::load(reference).map_err(stage_err("eval"))?;
    let mask = region
        .map(|p| load_mask(p, a.dims()).map_err(stage_err("eval")))
        .transpose()?;
    let report = evaluate(&a, &b, mask.as_ref()).map_err(stage_err("eval"))?;
    Ok(report.csv_row(dataset, method))
}
