use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use roadmend_core::pipeline::{read_config_file, run_eval, run_pipeline, PipelineConfig};

/// Remove vehicles from textured road meshes.
#[derive(Debug, Parser)]
#[command(name = "roadmend", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full correction pipeline on a mesh region.
    Run(Box<RunArgs>),
    /// Compare a completed image with a reference and print a CSV row.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Flat `key = value` file; flags given here take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// OBJ file or a directory of OBJ tiles.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Ground rectangle `x_min,y_min,x_max,y_max[,z_min,z_max]`; the whole mesh by default.
    #[arg(long, allow_hyphen_values = true)]
    roi: Option<String>,
    /// Ground size of one pixel, in mesh units.
    #[arg(long)]
    gsd: Option<f64>,
    #[arg(long, value_parser = ["x", "y", "z"])]
    up_axis: Option<String>,
    /// Single-channel mask image (white = remove).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Detector bounding-box JSON.
    #[arg(long)]
    bboxes: Option<PathBuf>,
    /// Detector command; called as `<cmd> <image> --out <json>`.
    #[arg(long)]
    detect_cmd: Option<String>,
    /// Relative box growth.
    #[arg(long)]
    dilation: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// Search passes per pyramid level.
    #[arg(long)]
    iters: Option<usize>,
    /// Maximum number of pyramid levels.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    edge_threshold: Option<f64>,
    #[arg(long, value_parser = ["vote", "copy"])]
    synthesis: Option<String>,
    /// Sample random candidates in uniform directions.
    #[arg(long)]
    no_directional_guidance: bool,
    /// Visit void pixels in alternating scanline order.
    #[arg(long)]
    no_linear_ordering: bool,
    #[arg(long, hide = true, value_parser = ["undirected", "literal"])]
    regularity_cost: Option<String>,
    /// Reference image to score the completed raster against.
    #[arg(long)]
    eval_ref: Option<PathBuf>,
    /// Write per-level images and offset fields.
    #[arg(long)]
    dump_debug: bool,
}

impl RunArgs {
    fn overrides(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        put("input", path(&self.input));
        put("roi", self.roi.clone());
        put("gsd", self.gsd.map(|v| v.to_string()));
        put("up-axis", self.up_axis.clone());
        put("mask", path(&self.mask));
        put("bboxes", path(&self.bboxes));
        put("detect-cmd", self.detect_cmd.clone());
        put("dilation", self.dilation.map(|v| v.to_string()));
        put("out", path(&self.out));
        put("seed", self.seed.map(|v| v.to_string()));
        put("patch-size", self.patch_size.map(|v| v.to_string()));
        put("lambda1", self.lambda1.map(|v| v.to_string()));
        put("lambda2", self.lambda2.map(|v| v.to_string()));
        put("iters", self.iters.map(|v| v.to_string()));
        put("levels", self.levels.map(|v| v.to_string()));
        put("edge-threshold", self.edge_threshold.map(|v| v.to_string()));
        put("synthesis", self.synthesis.clone());
        put("regularity-cost", self.regularity_cost.clone());
        put("eval-ref", path(&self.eval_ref));
        put("directional-guidance", self.no_directional_guidance.then(|| "false".into()));
        put("linear-ordering", self.no_linear_ordering.then(|| "false".into()));
        put("dump-debug", self.dump_debug.then(|| "true".into()));
        m
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    completed: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    /// Evaluate only where this mask image is white.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value = "dataset")]
    dataset: String,
    #[arg(long, default_value = "method")]
    method: String,
    /// Print the CSV header first.
    #[arg(long)]
    header: bool,
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let mut settings = match &args.config {
        Some(p) => read_config_file(p)?,
        None => BTreeMap::new(),
    };
    let overrides = args.overrides();
    // A mask source on the command line replaces the one from the file.
    if ["mask", "bboxes", "detect-cmd"].iter().any(|k| overrides.contains_key(*k)) {
        for k in ["mask", "bboxes", "detect-cmd"] {
            settings.remove(k);
        }
    }
    settings.extend(overrides);
    let config = PipelineConfig::from_map(&settings)?;
    let report = run_pipeline(&config)?;
    println!(
        "{} void pixels, {} masked facets; outputs in {}",
        report.void_pixels,
        report.masked_facets,
        config.out.display()
    );
    if let Some(e) = &report.eval {
        println!("full image: PSNR {:.2} dB, SSIM {:.4}", e.full.psnr_db, e.full.ssim);
        if let Some(m) = &e.mask {
            println!("mask only:  PSNR {:.2} dB, SSIM {:.4}", m.psnr_db, m.ssim);
        }
    }
    Ok(())
}

fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let row = run_eval(
        &args.completed,
        &args.reference,
        args.mask.as_deref(),
        &args.dataset,
        &args.method,
    )
    .context("evaluation failed")?;
    if args.header {
        println!("{}", roadmend_core::eval::CSV_HEADER);
    }
    println!("{row}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(*a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
