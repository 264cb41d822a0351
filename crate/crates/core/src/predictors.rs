//! OB predictors behind one interface: the six-channel input (RGB, FN/FP
//! scribbles, previous output) in, a probability map out.
//!
//! External predictors run as subprocesses over a work directory:
//!
//! | file            | content                                              |
//! |-----------------|------------------------------------------------------|
//! | `rgb.png`       | 8-bit RGB image (absent when no image is available)  |
//! | `fn.png`        | 8-bit gray FN scribble mask, values {0, 255}         |
//! | `fp.png`        | 8-bit gray FP scribble mask, values {0, 255}         |
//! | `prev.obfmap`   | previous output, `OBFMAP01`                          |
//! | `manifest.json` | `{"width", "height", "rgb", "fn", "fp", "prev", "output"}` |
//!
//! The command receives the directory as its only argument and must write
//! `out.obfmap` (`OBFMAP01`, same dimensions) there and exit with status 0.
//! Output values are clamped to `[0, 1]`; NaN is rejected.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::time::{Duration, Instant};

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interaction::{stage1_fp_source, FnFpMap};
use crate::raster::{io, trace_segments, BinaryMap, BoundarySegment, ProbabilityMap};

pub const DEFAULT_EXTERNAL_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Clone)]
pub struct PredictorInput {
    pub rgb: Option<RgbImage>,
    pub fnfp: FnFpMap,
    pub prev: ProbabilityMap,
}

impl PredictorInput {
    /// Input for the first round: zero scribbles and zero previous output.
    pub fn initial(rgb: Option<RgbImage>, width: usize, height: usize) -> Self {
        Self {
            rgb,
            fnfp: FnFpMap::empty(width, height),
            prev: ProbabilityMap::zeros(width, height),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.prev.dims()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        self.fnfp.fn_channel.same_dims(dims)?;
        self.fnfp.fp_channel.same_dims(dims)?;
        if let Some(rgb) = &self.rgb {
            self.prev.same_dims((rgb.width() as usize, rgb.height() as usize))?;
        }
        Ok(())
    }
}

pub trait Predictor: Send + Sync {
    fn predict(&self, input: &PredictorInput) -> Result<ProbabilityMap>;
}

/// Parsed `--predictor` value:
/// `gradient | oracle:<gt-dir>,<fn_rate>,<fp_rate> | extern:<command>`.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictorSpec {
    Gradient,
    OracleNoise { gt_dir: PathBuf, fn_rate: f64, fp_rate: f64 },
    External { command: String },
}

impl FromStr for PredictorSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "gradient" {
            return Ok(Self::Gradient);
        }
        if let Some(rest) = s.strip_prefix("oracle:") {
            let parts: Vec<&str> = rest.rsplitn(3, ',').collect();
            let [fp, fn_, dir] = parts[..] else {
                return Err(format!("expected oracle:<gt-dir>,<fn_rate>,<fp_rate>, got {s:?}"));
            };
            let rate = |v: &str| -> std::result::Result<f64, String> {
                let r: f64 = v.trim().parse().map_err(|_| format!("invalid rate {v:?}"))?;
                if (0.0..=1.0).contains(&r) {
                    Ok(r)
                } else {
                    Err(format!("rate {r} outside [0, 1]"))
                }
            };
            if dir.is_empty() {
                return Err("oracle predictor needs a ground-truth directory".into());
            }
            return Ok(Self::OracleNoise {
                gt_dir: PathBuf::from(dir),
                fn_rate: rate(fn_)?,
                fp_rate: rate(fp)?,
            });
        }
        if let Some(cmd) = s.strip_prefix("extern:") {
            if cmd.trim().is_empty() {
                return Err("extern predictor needs a command".into());
            }
            return Ok(Self::External {
                command: cmd.to_string(),
            });
        }
        Err(format!("unknown predictor {s:?} (expected gradient, oracle:... or extern:...)"))
    }
}

impl fmt::Display for PredictorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gradient => write!(f, "gradient"),
            Self::OracleNoise {
                gt_dir,
                fn_rate,
                fp_rate,
            } => write!(f, "oracle:{},{fn_rate},{fp_rate}", gt_dir.display()),
            Self::External { command } => write!(f, "extern:{command}"),
        }
    }
}

/// Everything a predictor may need about the sample it runs on.
#[derive(Debug, Clone, Copy)]
pub struct SampleContext<'a> {
    pub id: &'a str,
    pub rgb: Option<&'a RgbImage>,
    pub seed: u64,
    /// Minimum distance between oracle FP sources and the ground truth.
    pub fp_clearance: f64,
}

impl PredictorSpec {
    /// Builds the predictor for one sample.
    pub fn instantiate(&self, ctx: &SampleContext<'_>) -> Result<Box<dyn Predictor>> {
        match self {
            Self::Gradient => Ok(Box::new(GradientPredictor)),
            Self::External { command } => Ok(Box::new(ExternalPredictor::new(command.clone()))),
            Self::OracleNoise {
                gt_dir,
                fn_rate,
                fp_rate,
            } => {
                let gt_path = find_by_stem(gt_dir, ctx.id)?;
                let gt = crate::dataset::load_gt_mask(&gt_path)?.map;
                let fp_source = match ctx.rgb {
                    Some(rgb) => stage1_fp_source(rgb, &gt, ctx.fp_clearance)?,
                    None => Vec::new(),
                };
                let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
                Ok(Box::new(OracleNoisePredictor::new(
                    gt, *fn_rate, *fp_rate, &mut rng, &fp_source,
                )?))
            }
        }
    }
}

/// First file in `dir` (sorted by name) whose stem equals `stem`.
pub fn find_by_stem(dir: &Path, stem: &str) -> Result<PathBuf> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut matches: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.file_stem().is_some_and(|s| s == stem))
        .collect();
    matches.sort();
    matches
        .into_iter()
        .next()
        .ok_or_else(|| Error::MissingFile(dir.join(stem)))
}

/// Sobel gradient magnitude of 8-bit luminance (replicated borders),
/// divided by its 99th percentile (or the maximum when that is zero) and
/// clamped to `[0, 1]`.
pub fn gradient_predictor(rgb: &RgbImage) -> ProbabilityMap {
    let gray = image::imageops::grayscale(rgb);
    let grad = imageproc::gradients::sobel_gradients(&gray);
    let values: Vec<f32> = grad.pixels().map(|p| f32::from(p.0[0])).collect();
    let mut sorted = values.clone();
    sorted.sort_by(f32::total_cmp);
    let rank = ((0.99 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len().max(1)) - 1;
    let mut scale = sorted.get(rank).copied().unwrap_or(0.0);
    if scale <= 0.0 {
        scale = sorted.last().copied().unwrap_or(0.0);
    }
    let data = if scale > 0.0 {
        values.iter().map(|v| v / scale).collect()
    } else {
        vec![0.0; values.len()]
    };
    ProbabilityMap::from_vec_clamped(rgb.width() as usize, rgb.height() as usize, data)
        .expect("dimensions match image")
}

/// Classical edge baseline; ignores scribbles and the previous output.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradientPredictor;

impl Predictor for GradientPredictor {
    fn predict(&self, input: &PredictorInput) -> Result<ProbabilityMap> {
        input.validate()?;
        let rgb = input.rgb.as_ref().ok_or(Error::MissingInput("rgb"))?;
        Ok(gradient_predictor(rgb))
    }
}

/// Ground truth with a random share of its segments removed and a random
/// share of `fp_source` added, all at value 1.
pub fn oracle_noise_predictor<R: Rng + ?Sized>(
    gt: &BinaryMap,
    fn_rate: f64,
    fp_rate: f64,
    rng: &mut R,
    fp_source: &[BoundarySegment],
) -> Result<ProbabilityMap> {
    for r in [fn_rate, fp_rate] {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidValue(format!("rate {r} outside [0, 1]")));
        }
    }
    let mut out = BinaryMap::new(gt.width(), gt.height());
    for seg in trace_segments(gt)? {
        if !rng.random_bool(fn_rate) {
            for &p in seg.points() {
                out.set_pixel(p, true);
            }
        }
    }
    for seg in fp_source {
        if rng.random_bool(fp_rate) {
            for &p in seg.points() {
                out.set_pixel(p, true);
            }
        }
    }
    Ok(ProbabilityMap::from_binary(&out))
}

/// Simulated model for closed-loop tests: outside the scribbled area it
/// returns a fixed corruption of the ground truth; inside the FN or FP
/// scribbles it returns the ground truth itself.
#[derive(Debug, Clone)]
pub struct OracleNoisePredictor {
    gt: ProbabilityMap,
    corrupted: ProbabilityMap,
}

impl OracleNoisePredictor {
    pub fn new<R: Rng + ?Sized>(
        gt: BinaryMap,
        fn_rate: f64,
        fp_rate: f64,
        rng: &mut R,
        fp_source: &[BoundarySegment],
    ) -> Result<Self> {
        let corrupted = oracle_noise_predictor(&gt, fn_rate, fp_rate, rng, fp_source)?;
        Ok(Self {
            gt: ProbabilityMap::from_binary(&gt),
            corrupted,
        })
    }

    pub fn corrupted(&self) -> &ProbabilityMap {
        &self.corrupted
    }
}

impl Predictor for OracleNoisePredictor {
    fn predict(&self, input: &PredictorInput) -> Result<ProbabilityMap> {
        input.validate()?;
        self.gt.same_dims(input.dims())?;
        let mut out = self.corrupted.clone();
        let (w, h) = out.dims();
        for y in 0..h {
            for x in 0..w {
                if input.fnfp.covered(x, y) {
                    out.set(x, y, self.gt.get(x, y));
                }
            }
        }
        Ok(out)
    }
}

#[derive(Serialize)]
struct WorkManifest<'a> {
    width: usize,
    height: usize,
    rgb: Option<&'a str>,
    #[serde(rename = "fn")]
    fn_mask: &'a str,
    #[serde(rename = "fp")]
    fp_mask: &'a str,
    prev: &'a str,
    output: &'a str,
}

/// Subprocess predictor using the work-directory protocol.
#[derive(Debug, Clone)]
pub struct ExternalPredictor {
    command: String,
    timeout: Duration,
}

impl ExternalPredictor {
    pub fn new(command: String) -> Self {
        Self {
            command,
            timeout: DEFAULT_EXTERNAL_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Writes the protocol inputs into `dir`.
    pub fn write_work_dir(dir: &Path, input: &PredictorInput) -> Result<()> {
        let (w, h) = input.dims();
        if let Some(rgb) = &input.rgb {
            let path = dir.join("rgb.png");
            rgb.save(&path).map_err(|e| Error::Image {
                path: path.clone(),
                message: e.to_string(),
            })?;
        }
        io::write_mask(&dir.join("fn.png"), &input.fnfp.fn_channel)?;
        io::write_mask(&dir.join("fp.png"), &input.fnfp.fp_channel)?;
        io::write_obfmap(&dir.join("prev.obfmap"), &input.prev)?;
        let manifest = WorkManifest {
            width: w,
            height: h,
            rgb: input.rgb.as_ref().map(|_| "rgb.png"),
            fn_mask: "fn.png",
            fp_mask: "fp.png",
            prev: "prev.obfmap",
            output: "out.obfmap",
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))
            .map_err(|e| Error::io(&path, e))
    }

    /// Reads and validates `out.obfmap` from `dir`.
    pub fn read_output(dir: &Path, dims: (usize, usize)) -> Result<ProbabilityMap> {
        let path = dir.join("out.obfmap");
        if !path.is_file() {
            return Err(Error::ExternalFailure(format!("predictor did not write {}", path.display())));
        }
        let raw = io::read_float_raster(&path).map_err(|e| Error::ExternalFailure(e.to_string()))?;
        if (raw.width, raw.height) != dims {
            return Err(Error::ExternalFailure(format!(
                "predictor output is {}x{}, expected {}x{}",
                raw.width, raw.height, dims.0, dims.1
            )));
        }
        if raw.data.iter().any(|v| v.is_nan()) {
            return Err(Error::ExternalFailure("predictor output contains NaN".into()));
        }
        ProbabilityMap::from_vec_clamped(raw.width, raw.height, raw.data)
            .map_err(|e| Error::ExternalFailure(e.to_string()))
    }
}

impl Predictor for ExternalPredictor {
    fn predict(&self, input: &PredictorInput) -> Result<ProbabilityMap> {
        input.validate()?;
        let work = tempfile::Builder::new()
            .prefix("obkit-predict-")
            .tempdir()
            .map_err(|e| Error::io(Path::new("<temp>"), e))?;
        Self::write_work_dir(work.path(), input)?;
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(format!("{} \"$1\"", self.command))
            .arg("obkit-predictor")
            .arg(work.path())
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::ExternalFailure(format!("cannot start {:?}: {e}", self.command)))?;
        let started = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if started.elapsed() >= self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::ExternalFailure(format!(
                        "{:?} timed out after {:?}",
                        self.command, self.timeout
                    )));
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(Error::ExternalFailure(e.to_string())),
            }
        };
        if !status.success() {
            return Err(Error::ExternalFailure(format!("{:?} exited with {status}", self.command)));
        }
        Self::read_output(work.path(), input.dims())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{morph_thin, nms_thin, Pixel};

    fn step(w: u32, h: u32, at: u32, contrast: u8) -> RgbImage {
        RgbImage::from_fn(w, h, |x, _| image::Rgb([if x >= at { 60 + contrast } else { 60 }; 3]))
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("gradient".parse::<PredictorSpec>().unwrap(), PredictorSpec::Gradient);
        assert_eq!(
            "oracle:data/gt,0.3,0.25".parse::<PredictorSpec>().unwrap(),
            PredictorSpec::OracleNoise {
                gt_dir: "data/gt".into(),
                fn_rate: 0.3,
                fp_rate: 0.25
            }
        );
        assert_eq!(
            "extern:python3 model.py --fast".parse::<PredictorSpec>().unwrap(),
            PredictorSpec::External {
                command: "python3 model.py --fast".into()
            }
        );
        for bad in ["", "grad", "oracle:x,1.5,0", "oracle:x,0.1", "oracle:,0,0", "extern: "] {
            assert!(bad.parse::<PredictorSpec>().is_err(), "{bad}");
        }
        let s = "oracle:a,b/gt,0.5,0";
        assert_eq!(s.parse::<PredictorSpec>().unwrap().to_string(), "oracle:a,b/gt,0.5,0");
    }

    #[test]
    fn gradient_uniform_is_zero() {
        let img = RgbImage::from_pixel(16, 16, image::Rgb([120, 30, 200]));
        assert!(gradient_predictor(&img).data().iter().all(|&v| v == 0.0));
        let input = PredictorInput::initial(None, 4, 4);
        assert!(matches!(GradientPredictor.predict(&input), Err(Error::MissingInput("rgb"))));
    }

    #[test]
    fn gradient_step_ridge_is_contrast_invariant() {
        for contrast in [40u8, 80] {
            let p = gradient_predictor(&step(64, 64, 32, contrast));
            for y in 0..64 {
                assert_eq!(p.get(31, y), 1.0);
                assert_eq!(p.get(32, y), 1.0);
                assert_eq!(p.get(20, y), 0.0);
            }
        }
    }

    #[test]
    fn gradient_rotation_symmetry() {
        let img = RgbImage::from_fn(24, 16, |x, y| image::Rgb([((x * 7 + y * y * 3) % 256) as u8, (x * y) as u8, 9]));
        let rotated = image::imageops::rotate90(&img);
        let a = gradient_predictor(&img);
        let b = gradient_predictor(&rotated);
        for y in 0..16 {
            for x in 0..24 {
                // rotate90 maps (x, y) to (h - 1 - y, x).
                assert_eq!(a.get(x, y), b.get(15 - y, x));
            }
        }
    }

    fn gt_lines() -> BinaryMap {
        BinaryMap::from_pixels(
            40,
            40,
            (2..38).map(|x| Pixel::new(x, 10)).chain((2..38).map(|y| Pixel::new(30, y)).filter(|p| p.y > 12)),
        )
    }

    #[test]
    fn oracle_rates() {
        let gt = gt_lines();
        let fp = vec![BoundarySegment::new((0..20).map(|x| Pixel::new(x, 25)).collect()).unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let clean = oracle_noise_predictor(&gt, 0.0, 0.0, &mut rng, &fp).unwrap();
        assert_eq!(clean, ProbabilityMap::from_binary(&gt));
        let cfg = crate::raster::ThresholdConfig::default();
        assert_eq!(morph_thin(&nms_thin(&clean).threshold_binary(cfg.threshold)), gt);
        let gone = oracle_noise_predictor(&gt, 1.0, 0.0, &mut rng, &fp).unwrap();
        assert!(gone.data().iter().all(|&v| v == 0.0));
        let a = oracle_noise_predictor(&gt, 0.5, 0.5, &mut ChaCha8Rng::seed_from_u64(1), &fp).unwrap();
        let b = oracle_noise_predictor(&gt, 0.5, 0.5, &mut ChaCha8Rng::seed_from_u64(1), &fp).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oracle_predictor_reveals_gt_under_scribbles() {
        let gt = gt_lines();
        let p = OracleNoisePredictor::new(gt.clone(), 1.0, 0.0, &mut ChaCha8Rng::seed_from_u64(0), &[]).unwrap();
        let mut input = PredictorInput::initial(None, 40, 40);
        assert!(p.predict(&input).unwrap().data().iter().all(|&v| v == 0.0));
        input.fnfp.fn_channel = BinaryMap::from_pixels(40, 40, (0..40).map(|x| Pixel::new(x, 10)));
        let out = p.predict(&input).unwrap();
        assert_eq!(out.get(5, 10), 1.0);
        assert_eq!(out.get(30, 20), 0.0);
    }

    fn write_script(dir: &Path, body: &str) -> String {
        let path = dir.join("model.sh");
        fs::write(&path, format!("#!/bin/sh\nset -e\n{body}\n")).unwrap();
        format!("sh {}", path.display())
    }

    #[test]
    fn external_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let stored = ProbabilityMap::from_vec(3, 2, vec![0.0, 0.125, 1.0, 0.3, 0.70000005, 1e-30]).unwrap();
        io::write_obfmap(&dir.path().join("stored.obfmap"), &stored).unwrap();
        let cmd = write_script(
            dir.path(),
            &format!(
                "test -f \"$1/manifest.json\" && test -f \"$1/fn.png\" && test -f \"$1/prev.obfmap\"\ncp {} \"$1/out.obfmap\"",
                dir.path().join("stored.obfmap").display()
            ),
        );
        let out = ExternalPredictor::new(cmd).predict(&PredictorInput::initial(None, 3, 2)).unwrap();
        assert_eq!(out, stored);
    }

    #[test]
    fn external_failures() {
        let dir = tempfile::tempdir().unwrap();
        let input = PredictorInput::initial(None, 3, 2);
        let fail = write_script(dir.path(), "exit 3");
        assert!(matches!(ExternalPredictor::new(fail).predict(&input), Err(Error::ExternalFailure(_))));
        let silent = write_script(dir.path(), "true");
        assert!(matches!(ExternalPredictor::new(silent).predict(&input), Err(Error::ExternalFailure(_))));
        let slow = write_script(dir.path(), "sleep 5");
        let err = ExternalPredictor::new(slow)
            .with_timeout(Duration::from_millis(200))
            .predict(&input)
            .unwrap_err();
        assert!(err.to_string().contains("timed out"));
    }

    #[test]
    fn external_output_clamped_and_checked() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("wild.obfmap"),
            io::encode_float_raster(3, 2, &[-1.0, 0.5, 2.0, 0.0, 1.0, 7.0]),
        )
        .unwrap();
        fs::write(dir.path().join("small.obfmap"), io::encode_float_raster(1, 1, &[0.5])).unwrap();
        let cp = |name: &str| {
            write_script(
                dir.path(),
                &format!("cp {} \"$1/out.obfmap\"", dir.path().join(name).display()),
            )
        };
        let input = PredictorInput::initial(None, 3, 2);
        let out = ExternalPredictor::new(cp("wild.obfmap")).predict(&input).unwrap();
        assert_eq!(out.data(), &[0.0, 0.5, 1.0, 0.0, 1.0, 1.0]);
        assert!(ExternalPredictor::new(cp("small.obfmap")).predict(&input).is_err());
    }

    #[test]
    fn instantiate_oracle_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        io::write_mask(&dir.path().join("img7.png"), &gt_lines()).unwrap();
        let spec: PredictorSpec = format!("oracle:{},0,0", dir.path().display()).parse().unwrap();
        let ctx = SampleContext {
            id: "img7",
            rgb: None,
            seed: 1,
            fp_clearance: 2.0,
        };
        let p = spec.instantiate(&ctx).unwrap();
        let out = p.predict(&PredictorInput::initial(None, 40, 40)).unwrap();
        assert_eq!(out, ProbabilityMap::from_binary(&gt_lines()));
        let missing = SampleContext { id: "nope", ..ctx };
        assert!(matches!(spec.instantiate(&missing), Err(Error::MissingFile(_))));
    }
}
