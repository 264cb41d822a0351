//! Machine-simulated interaction: predict, find residual errors against the
//! ground truth, turn them into scribbles, refine, repeat.

use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::interaction::{
    boundary_mask, extract_residual_segments, postprocess, refine, select_segments, simulate_scribbles,
    FnFpMap, ScribbleConfig, SelectionConfig,
};
use crate::metrics::{avg_fn_fp, match_boundaries, MatchConfig, MatchCounts, ScribbleUsage};
use crate::predictors::{Predictor, PredictorInput};
use crate::raster::{BinaryMap, BoundarySegment, ProbabilityMap, ThresholdConfig};

/// Seed for one sample, independent of processing order.
pub fn derive_seed(seed: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub scribble: ScribbleConfig,
    pub selection: SelectionConfig,
    pub threshold: ThresholdConfig,
    pub matching: MatchConfig,
    /// `None` runs one round with every selected segment; `Some(k)` runs up
    /// to `k` rounds with at most one FN and one FP segment each.
    pub progressive: Option<usize>,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.scribble.validate()?;
        self.selection.validate()?;
        self.matching.validate()?;
        if self.progressive == Some(0) {
            return Err(Error::InvalidValue("progressive mode needs at least one round".into()));
        }
        Ok(())
    }

    /// Distance beyond which scribbles cannot reach: disk radius plus jitter.
    pub fn scribble_reach(&self) -> f64 {
        f64::from(self.scribble.disk_radius) + f64::from(self.scribble.max_position_perturbation) + 1.0
    }
}

#[derive(Debug, Clone)]
pub struct Round {
    pub fn_segments: Vec<BoundarySegment>,
    pub fp_segments: Vec<BoundarySegment>,
    pub fnfp: FnFpMap,
    pub output: ProbabilityMap,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub initial: ProbabilityMap,
    pub rounds: Vec<Round>,
}

impl Simulation {
    pub fn refined(&self) -> &ProbabilityMap {
        self.rounds.last().map_or(&self.initial, |r| &r.output)
    }

    /// Union of the scribble maps of all rounds.
    pub fn fnfp(&self) -> FnFpMap {
        let (w, h) = self.initial.dims();
        let mut out = FnFpMap::empty(w, h);
        for r in &self.rounds {
            out.fn_channel = out.fn_channel.union(&r.fnfp.fn_channel).expect("rounds share dimensions");
            out.fp_channel = out.fp_channel.union(&r.fnfp.fp_channel).expect("rounds share dimensions");
        }
        out
    }

    pub fn fn_segments(&self) -> Vec<BoundarySegment> {
        self.rounds.iter().flat_map(|r| r.fn_segments.iter().cloned()).collect()
    }

    pub fn fp_segments(&self) -> Vec<BoundarySegment> {
        self.rounds.iter().flat_map(|r| r.fp_segments.iter().cloned()).collect()
    }
}

/// Runs the interaction loop on one image. `seed` drives the scribble
/// perturbations of every round.
pub fn simulate_image(
    predictor: &dyn Predictor,
    rgb: Option<&RgbImage>,
    gt: &BinaryMap,
    cfg: &SimulationConfig,
    seed: u64,
) -> Result<Simulation> {
    cfg.validate()?;
    let (w, h) = gt.dims();
    let raw = predictor.predict(&PredictorInput::initial(rgb.cloned(), w, h))?;
    raw.same_dims((w, h))?;
    let initial = postprocess(&raw, &cfg.threshold);
    let tolerance = cfg.matching.d_max(w, h);
    let (max_rounds, selection) = match cfg.progressive {
        None => (1, cfg.selection),
        Some(k) => (
            k,
            SelectionConfig {
                max_segments: Some(1),
                ..cfg.selection
            },
        ),
    };
    let mut prev = initial.clone();
    let mut rounds = Vec::new();
    for round in 0..max_rounds {
        let mask = boundary_mask(&prev, &cfg.threshold);
        let (fn_res, fp_res) = extract_residual_segments(&mask, gt, tolerance, cfg.matching.exact)?;
        let fn_segments = select_segments(&fn_res, &selection);
        let fp_segments = select_segments(&fp_res, &selection);
        if fn_segments.is_empty() && fp_segments.is_empty() {
            break;
        }
        let scribble = ScribbleConfig {
            rng_seed: derive_seed(seed, &format!("round{round}")),
            ..cfg.scribble
        };
        let fnfp = simulate_scribbles(&fn_segments, &fp_segments, &scribble, (w, h));
        let input = PredictorInput {
            rgb: rgb.cloned(),
            fnfp: fnfp.clone(),
            prev: prev.clone(),
        };
        let candidate = predictor.predict(&input)?;
        candidate.same_dims((w, h))?;
        let output = postprocess(&refine(&prev, &candidate, &fnfp)?, &cfg.threshold);
        prev = output.clone();
        rounds.push(Round {
            fn_segments,
            fp_segments,
            fnfp,
            output,
        });
    }
    Ok(Simulation { initial, rounds })
}

/// Per-image summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow {
    pub id: String,
    pub rounds: usize,
    pub fn_segments: usize,
    pub fp_segments: usize,
    pub fn_pixels: usize,
    pub fp_pixels: usize,
    pub gt_pixels: usize,
    pub f_initial: f64,
    pub f_refined: f64,
}

/// F-measure of the thin boundary of a post-processed output.
pub fn output_f_measure(output: &ProbabilityMap, gt: &BinaryMap, cfg: &SimulationConfig) -> Result<MatchCounts> {
    let (w, h) = gt.dims();
    match_boundaries(
        &boundary_mask(output, &cfg.threshold),
        gt,
        cfg.matching.d_max(w, h),
        cfg.matching.exact,
    )
}

fn pixel_count(segs: &[BoundarySegment], w: usize, h: usize) -> usize {
    BinaryMap::from_pixels(w, h, segs.iter().flat_map(|s| s.points().iter().copied())).count_ones()
}

impl SimulationRow {
    pub fn new(id: &str, sim: &Simulation, gt: &BinaryMap, cfg: &SimulationConfig) -> Result<Self> {
        let (w, h) = gt.dims();
        let fn_segs = sim.fn_segments();
        let fp_segs = sim.fp_segments();
        Ok(Self {
            id: id.to_string(),
            rounds: sim.rounds.len(),
            fn_segments: fn_segs.len(),
            fp_segments: fp_segs.len(),
            fn_pixels: pixel_count(&fn_segs, w, h),
            fp_pixels: pixel_count(&fp_segs, w, h),
            gt_pixels: gt.count_ones(),
            f_initial: output_f_measure(&sim.initial, gt, cfg)?.f_measure(),
            f_refined: output_f_measure(sim.refined(), gt, cfg)?.f_measure(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub avg_fn: f64,
    pub avg_fp: f64,
    pub images: Vec<SimulationRow>,
}

impl SimulationSummary {
    /// `images` pairs each simulation with its ground truth, in output order.
    pub fn new(rows: Vec<SimulationRow>, images: &[(&Simulation, &BinaryMap)]) -> Result<Self> {
        let segs: Vec<(Vec<BoundarySegment>, Vec<BoundarySegment>)> =
            images.iter().map(|(s, _)| (s.fn_segments(), s.fp_segments())).collect();
        let usage: Vec<ScribbleUsage<'_>> = segs
            .iter()
            .zip(images)
            .map(|((f, p), (_, gt))| ScribbleUsage {
                fn_segments: f,
                fp_segments: p,
                gt,
            })
            .collect();
        let (avg_fn, avg_fp) = avg_fn_fp(&usage)?;
        Ok(Self {
            avg_fn,
            avg_fp,
            images: rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::OracleNoisePredictor;
    use crate::raster::Pixel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gt() -> BinaryMap {
        let mut m = BinaryMap::new(96, 96);
        for x in 10..86 {
            m.set(x, 20, true);
            m.set(x, 70, true);
        }
        for y in 21..70 {
            m.set(10, y, true);
        }
        for y in 32..60 {
            m.set(85, y, true);
        }
        m
    }

    fn far_fp() -> Vec<BoundarySegment> {
        vec![BoundarySegment::new((30..70).map(|x| Pixel::new(x, 45)).collect()).unwrap()]
    }

    #[test]
    fn seeds_differ_per_id() {
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
    }

    #[test]
    fn clean_oracle_needs_no_rounds() {
        let gt = gt();
        let p = OracleNoisePredictor::new(gt.clone(), 0.0, 0.0, &mut ChaCha8Rng::seed_from_u64(0), &[]).unwrap();
        let sim = simulate_image(&p, None, &gt, &SimulationConfig::default(), 3).unwrap();
        assert!(sim.rounds.is_empty());
        assert_eq!(sim.refined(), &sim.initial);
    }

    #[test]
    fn exact_scribbles_recover_gt() {
        let gt = gt();
        let p = OracleNoisePredictor::new(gt.clone(), 1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0), &far_fp()).unwrap();
        let cfg = SimulationConfig {
            scribble: ScribbleConfig::exact(12),
            selection: SelectionConfig {
                min_segment_length: 1,
                max_segments: None,
            },
            ..SimulationConfig::default()
        };
        let sim = simulate_image(&p, None, &gt, &cfg, 0).unwrap();
        assert_eq!(sim.rounds.len(), 1);
        assert_eq!(output_f_measure(&sim.initial, &gt, &cfg).unwrap().f_measure(), 0.0);
        assert_eq!(boundary_mask(sim.refined(), &cfg.threshold), gt);
        let row = SimulationRow::new("x", &sim, &gt, &cfg).unwrap();
        assert_eq!(row.f_refined, 1.0);
        assert_eq!(row.fp_pixels, 40);
        assert_eq!(row.fn_pixels, gt.count_ones());
    }

    #[test]
    fn progressive_uses_one_segment_per_channel_per_round() {
        let gt = gt();
        let p = OracleNoisePredictor::new(gt.clone(), 1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0), &far_fp()).unwrap();
        let cfg = SimulationConfig {
            scribble: ScribbleConfig::exact(2),
            selection: SelectionConfig {
                min_segment_length: 1,
                max_segments: None,
            },
            progressive: Some(10),
            ..SimulationConfig::default()
        };
        let sim = simulate_image(&p, None, &gt, &cfg, 0).unwrap();
        assert!(sim.rounds.len() >= 2);
        for r in &sim.rounds {
            assert!(r.fn_segments.len() <= 1 && r.fp_segments.len() <= 1);
        }
        let first = &sim.rounds[0];
        assert!(first.fp_segments.len() == 1);
        let f: Vec<f64> = sim
            .rounds
            .iter()
            .map(|r| output_f_measure(&r.output, &gt, &cfg).unwrap().f_measure())
            .collect();
        assert!(f.windows(2).all(|w| w[1] >= w[0]), "{f:?}");
        assert!((f.last().unwrap() - 1.0).abs() < 1e-12);
        assert!(SimulationConfig { progressive: Some(0), ..cfg }.validate().is_err());
    }

    #[test]
    fn same_seed_same_result() {
        let gt = gt();
        let p = OracleNoisePredictor::new(gt.clone(), 1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0), &far_fp()).unwrap();
        let cfg = SimulationConfig {
            selection: SelectionConfig {
                min_segment_length: 10,
                max_segments: None,
            },
            ..SimulationConfig::default()
        };
        let a = simulate_image(&p, None, &gt, &cfg, 9).unwrap();
        let b = simulate_image(&p, None, &gt, &cfg, 9).unwrap();
        assert_eq!(a.refined(), b.refined());
        assert_eq!(a.fnfp(), b.fnfp());
    }
}
