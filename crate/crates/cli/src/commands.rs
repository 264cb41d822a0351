use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use obkit_core::dataset::load_gt_mask;
use obkit_core::geometry::load_scene;
use obkit_core::interaction::{boundary_mask, postprocess, refine, ScribbleConfig, ScribbleDocument, SelectionConfig};
use obkit_core::metrics::{pr_curve, EvalReport, ImageEval, MatchConfig};
use obkit_core::obgen::{export_benchmark, generate_ob, BenchmarkSample, GenConfig, SampleRgb};
use obkit_core::predictors::{find_by_stem, PredictorInput, SampleContext};
use obkit_core::raster::{io, BinaryMap, ThresholdConfig, ThresholdMode};
use obkit_core::simulate::{derive_seed, simulate_image, SimulationConfig, SimulationRow, SimulationSummary};
use obkit_core::synthetic::shade;
use rayon::prelude::*;

use crate::{Cli, Command, EvaluateArgs, GenerateArgs, PostArgs, RefineArgs, ServeArgs, SimulateArgs};

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<obkit_core::Error> for CliError {
    fn from(e: obkit_core::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| input(format!("--out {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn require_dir(flag: &str, path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(input(format!("{flag} {}: not a directory", path.display())))
    }
}

/// Regular files in `dir` with one of `exts` (case-insensitive), sorted.
fn list_files(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| input(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn threshold_config(post: &PostArgs) -> Result<ThresholdConfig> {
    let mode = if post.binary {
        ThresholdMode::Binary
    } else {
        ThresholdMode::NonBinary
    };
    ThresholdConfig::new(post.threshold, mode).map_err(|e| input(format!("--threshold: {e}")))
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        pool = pool.num_threads(jobs as usize);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Simulate(a) => simulate(cli.seed, a),
        Command::Refine(a) => refine_cmd(cli.seed, a),
        Command::Serve(a) => serve(cli.seed, a),
    })
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let base = GenConfig {
        gap_factor: args.gap_factor,
        adjacency_walk_limit: args.walk_limit,
        contact_tolerance: args.contact_tol,
        ..GenConfig::default()
    };
    base.validate().map_err(|e| input(format!("--gap-factor/--contact-tol: {e}")))?;
    let samples: Vec<BenchmarkSample> = args
        .scenes
        .par_iter()
        .map(|path| -> Result<BenchmarkSample> {
            let scene = load_scene(path)?;
            let cfg = GenConfig {
                supersample: args.supersample.unwrap_or(scene.supersample),
                ..base
            };
            let (ob, gbuffer) = generate_ob(&scene.mesh, &scene.camera, &cfg)?;
            log::info!("{}: {} boundary pixels", path.display(), ob.boundary().count_ones());
            Ok(BenchmarkSample {
                id: stem(path),
                rgb: Some(SampleRgb::Image(shade(&gbuffer))),
                ob,
                gbuffer,
            })
        })
        .collect::<Result<_>>()?;
    create_dir(&args.out)?;
    let manifest = export_benchmark(&samples, &args.out)?;
    println!("wrote {} samples to {}", manifest.samples.len(), args.out.display());
    Ok(())
}

fn load_simulation_summary(path: &Path) -> Result<SimulationSummary> {
    let text = fs::read_to_string(path).map_err(|e| input(format!("--simulation {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| input(format!("--simulation {}: {e}", path.display())))
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    require_dir("--pred", &args.pred)?;
    require_dir("--gt", &args.gt)?;
    let cfg = MatchConfig {
        d_max_fraction: args.max_dist,
        thresholds: args.thresholds,
        exact: args.exact,
    };
    cfg.validate().map_err(|e| input(format!("--max-dist/--thresholds: {e}")))?;
    let gt_files = list_files(&args.gt, &["png"])?;
    if gt_files.is_empty() {
        return Err(input(format!("--gt {}: no PNG masks", args.gt.display())));
    }
    let images: Vec<ImageEval> = gt_files
        .par_iter()
        .map(|gt_path| -> Result<ImageEval> {
            let id = stem(gt_path);
            let gt = load_gt_mask(gt_path)?.map;
            let pred_path = find_by_stem(&args.pred, &id)
                .map_err(|_| input(format!("--pred {}: no prediction for {id}", args.pred.display())))?;
            let pred = io::read_probability(&pred_path)?;
            pred.same_dims(gt.dims())
                .map_err(|e| input(format!("{}: {e}", pred_path.display())))?;
            Ok(ImageEval::new(id, pr_curve(&pred, &gt, &cfg)?))
        })
        .collect::<Result<_>>()?;
    let mut report = EvalReport::from_images(images, &cfg)?;
    if let Some(path) = &args.simulation {
        let summary = load_simulation_summary(path)?;
        report.avg_fn = Some(summary.avg_fn);
        report.avg_fp = Some(summary.avg_fp);
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&args.out, text.as_bytes())?;
    println!(
        "ODS {:.4} (t = {:.2})  OIS {:.4}  AP {:.4}",
        report.ods, report.ods_threshold, report.ois, report.ap
    );
    if let (Some(f), Some(p)) = (report.avg_fn, report.avg_fp) {
        let scale = 10f64.powi(args.fp_scale as i32);
        println!("avgFN (x1e2) {:.3}  avgFP (x1e{}) {:.3}", f * 100.0, args.fp_scale, p * scale);
    }
    Ok(())
}

fn simulation_config(args: &SimulateArgs) -> Result<SimulationConfig> {
    let cfg = SimulationConfig {
        scribble: ScribbleConfig {
            disk_radius: args.radius,
            max_position_perturbation: args.perturb,
            length_perturbation_fraction: args.length_jitter,
            rng_seed: 0,
        },
        selection: SelectionConfig {
            min_segment_length: args.min_seg_len,
            max_segments: args.max_segs.map(|n| n as usize),
        },
        threshold: threshold_config(&args.post)?,
        matching: MatchConfig {
            d_max_fraction: args.max_dist,
            ..MatchConfig::default()
        },
        progressive: args.progressive.map(|k| k as usize),
    };
    cfg.validate().map_err(|e| input(e.to_string()))?;
    Ok(cfg)
}

struct ImageResult {
    id: String,
    gt: BinaryMap,
    sim: obkit_core::simulate::Simulation,
}

fn simulate(seed: u64, args: &SimulateArgs) -> Result<()> {
    require_dir("--images", &args.images)?;
    require_dir("--gt", &args.gt)?;
    let cfg = simulation_config(args)?;
    let images = list_files(&args.images, &["png", "jpg", "jpeg"])?;
    if images.is_empty() {
        return Err(input(format!("--images {}: no images", args.images.display())));
    }
    create_dir(&args.out)?;
    let results: Vec<ImageResult> = images
        .par_iter()
        .map(|path| -> Result<ImageResult> {
            let id = stem(path);
            let rgb = io::read_rgb(path)?;
            let gt_path = find_by_stem(&args.gt, &id)
                .map_err(|_| input(format!("--gt {}: no mask for {id}", args.gt.display())))?;
            let gt = load_gt_mask(&gt_path)?.map;
            gt.same_dims((rgb.width() as usize, rgb.height() as usize))
                .map_err(|e| input(format!("{}: {e}", gt_path.display())))?;
            let ctx = SampleContext {
                id: &id,
                rgb: Some(&rgb),
                seed: derive_seed(seed, &format!("{id}/predictor")),
                fp_clearance: cfg.scribble_reach(),
            };
            let predictor = args.predictor.instantiate(&ctx)?;
            let sim = simulate_image(predictor.as_ref(), Some(&rgb), &gt, &cfg, derive_seed(seed, &id))?;
            let dir = args.out.join(&id);
            create_dir(&dir)?;
            let fnfp = sim.fnfp();
            write_file(&dir.join("initial.obfmap"), &io::encode_obfmap(&sim.initial))?;
            write_file(&dir.join("fn.png"), &io::encode_mask_png(&fnfp.fn_channel))?;
            write_file(&dir.join("fp.png"), &io::encode_mask_png(&fnfp.fp_channel))?;
            write_file(&dir.join("refined.obfmap"), &io::encode_obfmap(sim.refined()))?;
            log::info!("{id}: {} rounds", sim.rounds.len());
            Ok(ImageResult { id, gt, sim })
        })
        .collect::<Result<_>>()?;
    let rows: Vec<SimulationRow> = results
        .iter()
        .map(|r| SimulationRow::new(&r.id, &r.sim, &r.gt, &cfg))
        .collect::<obkit_core::Result<_>>()?;
    let pairs: Vec<_> = results.iter().map(|r| (&r.sim, &r.gt)).collect();
    let summary = SimulationSummary::new(rows, &pairs)?;
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&args.out.join("summary.json"), text.as_bytes())?;
    let improved = summary.images.iter().filter(|r| r.f_refined > r.f_initial).count();
    println!(
        "{} images, {} improved; avg_fn {:.6} avg_fp {:.6}",
        summary.images.len(),
        improved,
        summary.avg_fn,
        summary.avg_fp
    );
    Ok(())
}

fn refine_cmd(seed: u64, args: &RefineArgs) -> Result<()> {
    let threshold = threshold_config(&args.post)?;
    let rgb = io::read_rgb(&args.image)?;
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let text = fs::read_to_string(&args.scribbles)
        .map_err(|e| input(format!("--scribbles {}: {e}", args.scribbles.display())))?;
    let doc = ScribbleDocument::parse(&text).map_err(|e| input(format!("--scribbles {}: {e}", args.scribbles.display())))?;
    let id = stem(&args.image);
    let ctx = SampleContext {
        id: &id,
        rgb: Some(&rgb),
        seed: derive_seed(seed, &format!("{id}/predictor")),
        fp_clearance: SimulationConfig::default().scribble_reach(),
    };
    let predictor = args.predictor.instantiate(&ctx)?;
    let prev = match &args.prev {
        Some(path) => {
            let prev = io::read_obfmap(path)?;
            prev.same_dims((w, h)).map_err(|e| input(format!("--prev {}: {e}", path.display())))?;
            prev
        }
        None => postprocess(&predictor.predict(&PredictorInput::initial(Some(rgb.clone()), w, h))?, &threshold),
    };
    let fnfp = doc.rasterize(w, h);
    let out = if fnfp.is_empty() {
        prev
    } else {
        let candidate = predictor.predict(&PredictorInput {
            rgb: Some(rgb),
            fnfp: fnfp.clone(),
            prev: prev.clone(),
        })?;
        postprocess(&refine(&prev, &candidate, &fnfp)?, &threshold)
    };
    write_file(&args.out, &io::encode_obfmap(&out))?;
    if let Some(path) = &args.mask_out {
        write_file(path, &io::encode_mask_png(&boundary_mask(&out, &threshold)))?;
    }
    Ok(())
}

fn serve(seed: u64, args: &ServeArgs) -> Result<()> {
    let config = obkit_service::ServiceConfig {
        sessions_dir: args.sessions.clone(),
        default_predictor: args.predictor.clone(),
        threshold: threshold_config(&args.post)?,
        seed,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Internal(format!("runtime: {e}")))?;
    runtime
        .block_on(obkit_service::serve(config, args.addr))
        .map_err(|e| input(format!("--addr {}: {e}", args.addr)))
}
