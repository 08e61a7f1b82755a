//! Flat pipeline configuration.
//!
//! One TOML table of scalar keys, units in the key names. Unknown keys are
//! errors. Any key can be overridden through the environment as
//! `OVTRACK_<KEY>` (upper case); the value is parsed as a TOML scalar, falling
//! back to a string.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::consistency::{CombinationRule, ScoringParams};
use crate::error::{Error, Result};
use crate::learn::FitOptions;
use crate::metrics::{EvalConfig, SplitDefinition, SplitName};
use crate::ovlabel::LabelConfig;
use crate::simulator::SimConfig;
use crate::tracker::TrackerConfig;

pub const ENV_PREFIX: &str = "OVTRACK_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffinityKind {
    Geometric,
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub split: SplitName,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub n_scenes: usize,
    pub n_train_scenes: usize,
    pub n_frames: u32,

    pub d_max_m: f64,
    pub affinity_min: f64,
    pub max_age: u32,
    pub frame_period_s: f64,
    pub affinity_model: AffinityKind,
    pub confidence_model: bool,
    pub lambda_c: f64,
    pub gt_iou_min: f64,
    pub holdout_fraction: f64,
    pub train_epochs: usize,
    pub learning_rate: f64,

    pub score_floor: f64,
    pub min_iou_2d: f64,

    pub alpha_p: f64,
    pub beta_ar: f64,
    pub lambda_s: f64,
    pub combination_rule: CombinationRule,

    pub match_dist_m: f64,
    pub n_recall_levels: usize,

    pub world_extent_m: f64,
    pub heading_noise_rad: f64,
    pub pos_sigma_m: f64,
    pub size_sigma_frac: f64,
    pub yaw_sigma_rad: f64,
    pub velocity_sigma_mps: f64,
    pub fp_rate_per_frame: f64,
    pub fn_prob: f64,
    pub miss_prob: f64,
    pub mislabel_prob: f64,
    pub novel_mislabel_prob: f64,
    pub mislabel_ref_distance_m: f64,
    pub mislabel_range_exponent: f64,
    pub jitter_px: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        let tracker = TrackerConfig::default();
        let scoring = ScoringParams::default();
        let label = LabelConfig::default();
        let eval = EvalConfig::default();
        let fit = FitOptions::default();
        PipelineConfig {
            seed: 0,
            split: SplitName::Urban,
            jobs: 0,
            n_scenes: 5,
            n_train_scenes: 5,
            n_frames: sim.n_frames,
            d_max_m: tracker.d_max_m,
            affinity_min: tracker.affinity_min,
            max_age: tracker.max_age,
            frame_period_s: tracker.frame_period_s,
            affinity_model: AffinityKind::Learned,
            confidence_model: true,
            lambda_c: crate::tracker::DEFAULT_LAMBDA_C,
            gt_iou_min: crate::assignment::DEFAULT_GT_IOU_MIN,
            holdout_fraction: 0.2,
            train_epochs: fit.epochs,
            learning_rate: fit.learning_rate,
            score_floor: label.score_floor,
            // Small objects otherwise inherit labels from large overlapping boxes.
            min_iou_2d: 0.1,
            alpha_p: scoring.alpha_p,
            beta_ar: scoring.beta_ar,
            lambda_s: scoring.lambda_s,
            combination_rule: scoring.rule,
            match_dist_m: eval.match_dist_m,
            n_recall_levels: eval.n_recall_levels,
            world_extent_m: sim.world_extent_m,
            heading_noise_rad: sim.heading_noise_rad,
            pos_sigma_m: sim.noise_3d.pos_sigma_m,
            size_sigma_frac: sim.noise_3d.size_sigma_frac,
            yaw_sigma_rad: sim.noise_3d.yaw_sigma_rad,
            velocity_sigma_mps: sim.noise_3d.velocity_sigma_mps,
            fp_rate_per_frame: sim.noise_3d.fp_rate_per_frame,
            fn_prob: sim.noise_3d.fn_prob,
            miss_prob: sim.noise_2d.miss_prob,
            mislabel_prob: sim.noise_2d.mislabel_prob,
            novel_mislabel_prob: sim.noise_2d.novel_mislabel_prob.unwrap_or(sim.noise_2d.mislabel_prob),
            mislabel_ref_distance_m: sim.noise_2d.mislabel_ref_distance_m.unwrap_or(25.0),
            mislabel_range_exponent: sim.noise_2d.mislabel_range_exponent,
            jitter_px: sim.noise_2d.jitter_px,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Origin {
    Reference,
    Design,
}

/// Every key in emission order with its origin and a short description.
const KEYS: &[(&str, Origin, &str)] = &[
    ("seed", Origin::Design, "master seed for simulation and training"),
    ("split", Origin::Reference, "base/novel split: rare, urban or diverse"),
    ("jobs", Origin::Design, "worker threads, 0 = all cores"),
    ("n_scenes", Origin::Design, "evaluation scenes simulated by the pipeline"),
    ("n_train_scenes", Origin::Design, "training scenes simulated by the pipeline"),
    ("n_frames", Origin::Design, "frames per simulated scene"),
    ("d_max_m", Origin::Reference, "edge truncation distance"),
    ("affinity_min", Origin::Design, "edges below this affinity are never matched"),
    ("max_age", Origin::Design, "consecutive misses before a track dies"),
    ("frame_period_s", Origin::Reference, "time between keyframes"),
    ("affinity_model", Origin::Design, "geometric or learned"),
    ("confidence_model", Origin::Design, "false = every box gets confidence 1.0"),
    ("lambda_c", Origin::Reference, "confidence regression loss weight"),
    ("gt_iou_min", Origin::Design, "3D IoU floor for ground-truth id assignment"),
    ("holdout_fraction", Origin::Design, "share of training examples held out"),
    ("train_epochs", Origin::Design, "gradient steps per model"),
    ("learning_rate", Origin::Design, "gradient step size"),
    ("score_floor", Origin::Reference, "2D detections below this score are ignored"),
    ("min_iou_2d", Origin::Design, "minimum 2D IoU for a label, 0 = any overlap"),
    ("alpha_p", Origin::Reference, "perspective correction factor"),
    ("beta_ar", Origin::Reference, "aspect ratio threshold"),
    ("lambda_s", Origin::Reference, "depth scale"),
    ("combination_rule", Origin::Design, "mean_times_frequency, sum or majority"),
    ("match_dist_m", Origin::Design, "evaluation match radius (BEV center distance)"),
    ("n_recall_levels", Origin::Design, "recall sweep resolution"),
    ("world_extent_m", Origin::Design, "simulated half-width of the scene"),
    ("heading_noise_rad", Origin::Design, "per-frame heading change, std dev"),
    ("pos_sigma_m", Origin::Design, "3D proposal center noise, std dev"),
    ("size_sigma_frac", Origin::Design, "3D proposal relative size noise, std dev"),
    ("yaw_sigma_rad", Origin::Design, "3D proposal yaw noise, std dev"),
    ("velocity_sigma_mps", Origin::Design, "3D proposal velocity noise, std dev"),
    ("fp_rate_per_frame", Origin::Design, "mean false 3D proposals per frame"),
    ("fn_prob", Origin::Design, "probability a 3D proposal is missing"),
    ("miss_prob", Origin::Design, "probability a 2D detection is missing"),
    ("mislabel_prob", Origin::Design, "2D mislabel rate for base classes at the reference range"),
    ("novel_mislabel_prob", Origin::Design, "2D mislabel rate for novel classes at the reference range"),
    ("mislabel_ref_distance_m", Origin::Design, "range at which the mislabel rates apply"),
    ("mislabel_range_exponent", Origin::Design, "growth of the mislabel rate with range"),
    ("jitter_px", Origin::Design, "2D corner noise, std dev"),
];

fn parse_scalar(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn to_table(config: &PipelineConfig) -> toml::Table {
    toml::Table::try_from(config).expect("config serializes to a table")
}

impl PipelineConfig {
    /// Defaults, then `path` if given, then environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>().map_err(|e| Error::config("<file>", format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        let env: BTreeMap<String, String> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        apply_env(&mut table, &env)?;
        Self::from_table(table)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table = text
            .parse::<toml::Table>()
            .map_err(|e| Error::config("<file>", e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        for key in table.keys() {
            if !KEYS.iter().any(|(k, _, _)| k == key) {
                return Err(Error::config(key, "unknown key"));
            }
        }
        for (key, value) in &table {
            let mut one = toml::Table::new();
            one.insert(key.clone(), value.clone());
            if let Err(e) = toml::Value::Table(one).try_into::<PipelineConfig>() {
                return Err(Error::config(key, e.message().to_string()));
            }
        }
        let config: PipelineConfig = toml::Value::Table(table).try_into().map_err(|e| Error::config("<file>", e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_scenes == 0 {
            return Err(Error::config("n_scenes", "must be at least 1"));
        }
        self.tracker().validate()?;
        self.scoring().validate()?;
        self.eval().validate()?;
        self.sim(0).validate()?;
        let unit = |key: &str, v: f64| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(key, format!("{v} outside [0, 1]")))
            }
        };
        unit("score_floor", self.score_floor)?;
        unit("min_iou_2d", self.min_iou_2d)?;
        unit("gt_iou_min", self.gt_iou_min)?;
        unit("novel_mislabel_prob", self.novel_mislabel_prob)?;
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::config("holdout_fraction", "must lie in [0, 1)"));
        }
        if !(self.lambda_c > 0.0 && self.lambda_c.is_finite()) {
            return Err(Error::config("lambda_c", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if self.train_epochs == 0 {
            return Err(Error::config("train_epochs", "must be at least 1"));
        }
        Ok(())
    }

    pub fn split_definition(&self) -> SplitDefinition {
        SplitDefinition::new(self.split)
    }

    pub fn tracker(&self) -> TrackerConfig {
        TrackerConfig {
            d_max_m: self.d_max_m,
            affinity_min: self.affinity_min,
            max_age: self.max_age,
            frame_period_s: self.frame_period_s,
        }
    }

    pub fn scoring(&self) -> ScoringParams {
        ScoringParams {
            alpha_p: self.alpha_p,
            beta_ar: self.beta_ar,
            lambda_s: self.lambda_s,
            rule: self.combination_rule,
        }
    }

    pub fn label(&self) -> LabelConfig {
        LabelConfig {
            min_iou_2d: self.min_iou_2d,
            score_floor: self.score_floor,
        }
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig {
            match_dist_m: self.match_dist_m,
            n_recall_levels: self.n_recall_levels,
        }
    }

    pub fn fit(&self) -> FitOptions {
        FitOptions {
            epochs: self.train_epochs,
            learning_rate: self.learning_rate,
            ..FitOptions::default()
        }
    }

    /// Simulator settings for one scene seed.
    pub fn sim(&self, seed: u64) -> SimConfig {
        let mut s = SimConfig {
            seed,
            n_frames: self.n_frames,
            frame_period_s: self.frame_period_s,
            world_extent_m: self.world_extent_m,
            heading_noise_rad: self.heading_noise_rad,
            ..SimConfig::default()
        };
        let n3 = &mut s.noise_3d;
        n3.pos_sigma_m = self.pos_sigma_m;
        n3.size_sigma_frac = self.size_sigma_frac;
        n3.yaw_sigma_rad = self.yaw_sigma_rad;
        n3.velocity_sigma_mps = self.velocity_sigma_mps;
        n3.fp_rate_per_frame = self.fp_rate_per_frame;
        n3.fn_prob = self.fn_prob;
        let n2 = &mut s.noise_2d;
        n2.miss_prob = self.miss_prob;
        n2.mislabel_prob = self.mislabel_prob;
        n2.novel_mislabel_prob = Some(self.novel_mislabel_prob);
        n2.novel_classes = self.split_definition().novel_classes;
        n2.mislabel_ref_distance_m = Some(self.mislabel_ref_distance_m);
        n2.mislabel_range_exponent = self.mislabel_range_exponent;
        n2.jitter_px = self.jitter_px;
        s
    }

    /// Settings with every noise source off.
    pub fn noiseless(&self) -> PipelineConfig {
        PipelineConfig {
            heading_noise_rad: 0.0,
            pos_sigma_m: 0.0,
            size_sigma_frac: 0.0,
            yaw_sigma_rad: 0.0,
            velocity_sigma_mps: 0.0,
            fp_rate_per_frame: 0.0,
            fn_prob: 0.0,
            miss_prob: 0.0,
            mislabel_prob: 0.0,
            novel_mislabel_prob: 0.0,
            jitter_px: 0.0,
            ..self.clone()
        }
    }

    /// TOML text with every key, each commented with its origin.
    pub fn to_annotated_toml(&self) -> String {
        let table = to_table(self);
        let mut out = String::from("# ovtrack pipeline configuration\n");
        for (key, origin, doc) in KEYS {
            let tag = match origin {
                Origin::Reference => "reference setting",
                Origin::Design => "design default",
            };
            let value = &table[*key];
            let _ = writeln!(out, "{key} = {value}  # {tag}; {doc}");
        }
        out
    }
}

fn apply_env(table: &mut toml::Table, env: &BTreeMap<String, String>) -> Result<()> {
    for (var, raw) in env {
        let key = var[ENV_PREFIX.len()..].to_ascii_lowercase();
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            return Err(Error::config(&key, format!("unknown key from environment variable {var}")));
        }
        table.insert(key, parse_scalar(raw));
    }
    Ok(())
}
