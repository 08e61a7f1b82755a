//! Track consistency scoring.
//!
//! Each labeled box gets a depth proxy from its 2D footprint, and its predicted
//! confidence is scaled by `exp(-depth / lambda_s)`. Per class, the scaled
//! confidences are combined with how often the class occurs in the track and
//! the best class labels the whole track. Tracks with no labeled box are
//! dropped.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Box2D;
use crate::tracker::Track;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringParams {
    pub alpha_p: f64,
    pub beta_ar: f64,
    pub lambda_s: f64,
    pub rule: CombinationRule,
}

impl Default for ScoringParams {
    fn default() -> Self {
        ScoringParams {
            alpha_p: 0.2,
            beta_ar: 2.5,
            lambda_s: 250.0,
            rule: CombinationRule::MeanTimesFrequency,
        }
    }
}

impl ScoringParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha_p) {
            return Err(Error::config("alpha_p", "must lie in [0, 1)"));
        }
        if !(self.beta_ar > 0.0 && self.beta_ar.is_finite()) {
            return Err(Error::config("beta_ar", "must be positive"));
        }
        if !(self.lambda_s > 0.0 && self.lambda_s.is_finite()) {
            return Err(Error::config("lambda_s", "must be positive"));
        }
        Ok(())
    }
}

/// How per-class evidence is turned into a class score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinationRule {
    /// Mean modified confidence times relative frequency.
    #[default]
    MeanTimesFrequency,
    /// Sum of modified confidences.
    Sum,
    /// Number of frames with the class; confidences ignored.
    Majority,
}

impl std::str::FromStr for CombinationRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_times_frequency" => Ok(CombinationRule::MeanTimesFrequency),
            "sum" => Ok(CombinationRule::Sum),
            "majority" => Ok(CombinationRule::Majority),
            _ => Err(Error::config(
                "combination_rule",
                format!("unknown rule `{s}`, expected mean_times_frequency, sum or majority"),
            )),
        }
    }
}

impl CombinationRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            CombinationRule::MeanTimesFrequency => "mean_times_frequency",
            CombinationRule::Sum => "sum",
            CombinationRule::Majority => "majority",
        }
    }
}

pub fn box_size_ratio(bbox: &Box2D, image_w: f64, image_h: f64) -> Result<f64> {
    if !(image_w > 0.0 && image_h > 0.0) {
        return Err(Error::DegenerateBox(format!("image size {image_w}x{image_h}")));
    }
    let area = bbox.area();
    if area <= 0.0 {
        return Err(Error::DegenerateBox(format!("zero-area 2D box {bbox:?}")));
    }
    Ok(area / (image_w * image_h))
}

/// Dimensionless depth proxy: inverse relative box area, reduced for boxes
/// lower in the image and divided by the aspect ratio for wide boxes.
pub fn estimate_depth(bbox: &Box2D, image_w: f64, image_h: f64, params: &ScoringParams) -> Result<f64> {
    if bbox.height() <= 0.0 {
        return Err(Error::DegenerateBox(format!("zero-height 2D box {bbox:?}")));
    }
    let b_size = box_size_ratio(bbox, image_w, image_h)?;
    let y_center = 0.5 * (bbox.y1() + bbox.y2());
    let mut depth = (1.0 / b_size) * (1.0 - params.alpha_p * (y_center / image_h));
    let aspect = bbox.width() / bbox.height();
    if aspect > params.beta_ar {
        depth /= aspect;
    }
    Ok(depth)
}

pub fn distance_weight(depth: f64, lambda_s: f64) -> f64 {
    (-depth / lambda_s).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub count: usize,
    pub mean_modified_confidence: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackClass {
    Class(String),
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackScore {
    pub class: TrackClass,
    pub scores: BTreeMap<String, ClassScore>,
}

impl TrackScore {
    pub fn class_name(&self) -> Option<&str> {
        match &self.class {
            TrackClass::Class(c) => Some(c),
            TrackClass::Dropped => None,
        }
    }
}

/// Picks one class for the whole track. Ties go to the lexicographically
/// smallest class name.
pub fn score_track(track: &Track, params: &ScoringParams) -> Result<TrackScore> {
    let mut per_class: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for obs in &track.observations {
        let Some(m) = &obs.label else { continue };
        let depth = estimate_depth(&m.bbox, m.image_width, m.image_height, params)?;
        let modified = obs.confidence * distance_weight(depth, params.lambda_s);
        per_class.entry(m.class_name.clone()).or_default().push(modified);
    }
    Ok(combine(&per_class, params.rule))
}

/// Scores classes from per-class lists of modified confidences.
pub fn combine(per_class: &BTreeMap<String, Vec<f64>>, rule: CombinationRule) -> TrackScore {
    let total: usize = per_class.values().map(Vec::len).sum();
    let mut scores = BTreeMap::new();
    let mut best: Option<(&str, f64)> = None;
    for (class, values) in per_class {
        if values.is_empty() {
            continue;
        }
        let count = values.len();
        let sum: f64 = values.iter().sum();
        let mean = sum / count as f64;
        let score = match rule {
            CombinationRule::MeanTimesFrequency => mean * (count as f64 / total as f64),
            CombinationRule::Sum => sum,
            CombinationRule::Majority => count as f64,
        };
        // BTreeMap order makes strict `>` keep the smallest name on ties.
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((class, score));
        }
        scores.insert(
            class.clone(),
            ClassScore {
                count,
                mean_modified_confidence: mean,
                score,
            },
        );
    }
    TrackScore {
        class: best.map_or(TrackClass::Dropped, |(c, _)| TrackClass::Class(c.to_string())),
        scores,
    }
}
