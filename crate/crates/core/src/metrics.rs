//! AMOTA / AMOTP evaluation with a recall sweep, and base/novel splits.
//!
//! Per class, predictions are matched greedily by score to the nearest
//! unmatched ground truth within `match_dist_m` (BEV center distance). A first
//! pass with every prediction fixes one score threshold per recall level; each
//! level is then re-run at its threshold and scored with MOTAR. Levels the
//! predictions cannot reach score MOTAR 0 and MOTP `match_dist_m`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bev_center_distance, Box3D};
use crate::CLASSES;

pub const DEFAULT_MATCH_DIST_M: f64 = 2.0;
pub const DEFAULT_N_RECALL_LEVELS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Rare,
    Urban,
    Diverse,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Rare, SplitName::Urban, SplitName::Diverse];

    pub fn as_str(&self) -> &'static str {
        match self {
            SplitName::Rare => "rare",
            SplitName::Urban => "urban",
            SplitName::Diverse => "diverse",
        }
    }

    fn novel(&self) -> [&'static str; 3] {
        match self {
            SplitName::Rare => ["bicycle", "bus", "motorcycle"],
            SplitName::Urban => ["bicycle", "bus", "pedestrian"],
            SplitName::Diverse => ["motorcycle", "pedestrian", "truck"],
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SplitName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::UnknownSplit(s.to_string()))
    }
}

impl std::fmt::Display for SplitName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDefinition {
    pub name: SplitName,
    pub base_classes: Vec<String>,
    pub novel_classes: Vec<String>,
}

impl SplitDefinition {
    pub fn new(name: SplitName) -> Self {
        let novel = name.novel();
        SplitDefinition {
            name,
            base_classes: CLASSES
                .iter()
                .filter(|c| !novel.contains(c))
                .map(|c| c.to_string())
                .collect(),
            novel_classes: novel.iter().map(|c| c.to_string()).collect(),
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(Self::new(name.parse()?))
    }

    pub fn is_base(&self, class: &str) -> bool {
        self.base_classes.iter().any(|c| c == class)
    }

    pub fn is_novel(&self, class: &str) -> bool {
        self.novel_classes.iter().any(|c| c == class)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtObject {
    pub track_id: u64,
    pub class_name: String,
    pub bbox: Box3D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredObject {
    pub track_id: u64,
    pub class_name: String,
    pub score: f64,
    pub bbox: Box3D,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameData {
    pub gt: Vec<GtObject>,
    pub preds: Vec<PredObject>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalScene {
    pub name: String,
    pub frames: BTreeMap<u32, FrameData>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub match_dist_m: f64,
    pub n_recall_levels: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            match_dist_m: DEFAULT_MATCH_DIST_M,
            n_recall_levels: DEFAULT_N_RECALL_LEVELS,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.match_dist_m > 0.0 && self.match_dist_m.is_finite()) {
            return Err(Error::config("match_dist_m", "must be positive"));
        }
        if self.n_recall_levels < 2 {
            return Err(Error::config("n_recall_levels", "must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
    pub distances: Vec<f64>,
    /// Scores of the matched predictions.
    pub tp_scores: Vec<f64>,
}

/// Last predicted track id matched to each ground-truth track.
pub type IdHistory = BTreeMap<u64, u64>;

/// Matches one frame of a single class. `history` carries identities across
/// frames of one scene and is updated in place.
pub fn match_frame(gt: &[GtObject], preds: &[&PredObject], match_dist_m: f64, history: &mut IdHistory) -> FrameCounts {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(a.cmp(&b)));
    let mut taken = vec![false; gt.len()];
    let mut counts = FrameCounts::default();
    for pi in order {
        let p = preds[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gt.iter().enumerate() {
            if taken[gi] {
                continue;
            }
            let d = bev_center_distance(&p.bbox, &g.bbox);
            if d <= match_dist_m && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((gi, d));
            }
        }
        match best {
            Some((gi, d)) => {
                taken[gi] = true;
                counts.tp += 1;
                counts.distances.push(d);
                counts.tp_scores.push(p.score);
                if let Some(prev) = history.insert(gt[gi].track_id, p.track_id) {
                    if prev != p.track_id {
                        counts.ids += 1;
                    }
                }
            }
            None => counts.fp += 1,
        }
    }
    counts.fn_ = gt.len() - counts.tp;
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallLevel {
    pub recall: f64,
    pub achieved: bool,
    pub threshold: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ids: usize,
    pub motar: f64,
    pub motp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_name: String,
    pub n_gt: usize,
    pub amota: f64,
    pub amotp: f64,
    pub levels: Vec<RecallLevel>,
}

struct ClassFrames<'a> {
    scenes: Vec<Vec<(Vec<GtObject>, Vec<&'a PredObject>)>>,
    n_gt: usize,
}

fn class_frames<'a>(scenes: &'a [&'a EvalScene], class: &str) -> ClassFrames<'a> {
    let mut n_gt = 0;
    let scenes = scenes
        .iter()
        .map(|s| {
            s.frames
                .values()
                .map(|f| {
                    let gt: Vec<GtObject> = f.gt.iter().filter(|g| g.class_name == class).cloned().collect();
                    n_gt += gt.len();
                    let preds = f.preds.iter().filter(|p| p.class_name == class).collect();
                    (gt, preds)
                })
                .collect()
        })
        .collect();
    ClassFrames { scenes, n_gt }
}

fn run_at(frames: &ClassFrames<'_>, threshold: f64, match_dist_m: f64) -> FrameCounts {
    let mut total = FrameCounts::default();
    for scene in &frames.scenes {
        let mut history = IdHistory::new();
        for (gt, preds) in scene {
            let kept: Vec<&PredObject> = preds.iter().copied().filter(|p| p.score >= threshold).collect();
            let c = match_frame(gt, &kept, match_dist_m, &mut history);
            total.tp += c.tp;
            total.fp += c.fp;
            total.fn_ += c.fn_;
            total.ids += c.ids;
            total.distances.extend(c.distances);
            total.tp_scores.extend(c.tp_scores);
        }
    }
    total
}

/// AMOTA and AMOTP for one class; `None` when the class has no ground truth.
/// Scenes are processed in name order.
pub fn amota_amotp(scenes: &[EvalScene], class: &str, config: &EvalConfig) -> Option<ClassMetrics> {
    let mut sorted: Vec<&EvalScene> = scenes.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    let frames = class_frames(&sorted, class);
    let p = frames.n_gt;
    if p == 0 {
        return None;
    }
    let all = run_at(&frames, f64::NEG_INFINITY, config.match_dist_m);
    let mut tp_scores = all.tp_scores;
    tp_scores.sort_by(|a, b| b.total_cmp(a));

    let n = config.n_recall_levels;
    let levels: Vec<RecallLevel> = (1..n)
        .map(|k| {
            let recall = k as f64 / (n - 1) as f64;
            let needed = ((recall * p as f64) - 1e-9).ceil().max(1.0) as usize;
            let Some(&threshold) = tp_scores.get(needed - 1) else {
                return RecallLevel {
                    recall,
                    achieved: false,
                    threshold: None,
                    tp: 0,
                    fp: 0,
                    fn_: p,
                    ids: 0,
                    motar: 0.0,
                    motp: config.match_dist_m,
                };
            };
            let c = run_at(&frames, threshold, config.match_dist_m);
            let motar = if c.tp == 0 {
                0.0
            } else {
                (1.0 - (c.ids + c.fp) as f64 / c.tp as f64).max(0.0)
            };
            let motp = if c.distances.is_empty() {
                config.match_dist_m
            } else {
                c.distances.iter().sum::<f64>() / c.distances.len() as f64
            };
            RecallLevel {
                recall,
                achieved: true,
                threshold: Some(threshold),
                tp: c.tp,
                fp: c.fp,
                fn_: c.fn_,
                ids: c.ids,
                motar,
                motp,
            }
        })
        .collect();
    let m = levels.len() as f64;
    Some(ClassMetrics {
        class_name: class.to_string(),
        n_gt: p,
        amota: levels.iter().map(|l| l.motar).sum::<f64>() / m,
        amotp: levels.iter().map(|l| l.motp).sum::<f64>() / m,
        levels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub amota: f64,
    pub amotp: f64,
    pub n_classes: usize,
}

fn aggregate<'a>(classes: impl Iterator<Item = &'a ClassMetrics>) -> Option<Aggregate> {
    let v: Vec<_> = classes.collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    Some(Aggregate {
        amota: v.iter().map(|c| c.amota).sum::<f64>() / n,
        amotp: v.iter().map(|c| c.amotp).sum::<f64>() / n,
        n_classes: v.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: SplitDefinition,
    pub match_dist_m: f64,
    pub n_recall_levels: usize,
    pub classes: BTreeMap<String, ClassMetrics>,
    /// Split classes without ground truth.
    pub absent: Vec<String>,
    pub overall: Option<Aggregate>,
    pub base: Option<Aggregate>,
    pub novel: Option<Aggregate>,
}

pub fn evaluate_split(scenes: &[EvalScene], split: &SplitDefinition, config: &EvalConfig) -> Result<MetricsReport> {
    config.validate()?;
    let names: Vec<&String> = split.base_classes.iter().chain(&split.novel_classes).collect();
    let results: Vec<(String, Option<ClassMetrics>)> = names
        .par_iter()
        .map(|c| ((*c).clone(), amota_amotp(scenes, c, config)))
        .collect();
    let mut classes = BTreeMap::new();
    let mut absent = Vec::new();
    for (name, m) in results {
        match m {
            Some(m) => {
                classes.insert(name, m);
            }
            None => absent.push(name),
        }
    }
    absent.sort();
    Ok(MetricsReport {
        overall: aggregate(classes.values()),
        base: aggregate(classes.values().filter(|c| split.is_base(&c.class_name))),
        novel: aggregate(classes.values().filter(|c| split.is_novel(&c.class_name))),
        split: split.clone(),
        match_dist_m: config.match_dist_m,
        n_recall_levels: config.n_recall_levels,
        classes,
        absent,
    })
}

impl MetricsReport {
    /// Plain-text table: one row per class, then the aggregates.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "split: {}  (match {} m, {} recall levels)", self.split.name, self.match_dist_m, self.n_recall_levels);
        let _ = writeln!(s, "{:<12} {:<6} {:>6} {:>8} {:>8}", "class", "set", "gt", "AMOTA", "AMOTP");
        let mut names: Vec<&String> = self.split.base_classes.iter().chain(&self.split.novel_classes).collect();
        names.sort();
        for name in names {
            let set = if self.split.is_novel(name) { "novel" } else { "base" };
            match self.classes.get(name) {
                Some(c) => {
                    let _ = writeln!(s, "{:<12} {:<6} {:>6} {:>8.3} {:>8.3}", name, set, c.n_gt, c.amota, c.amotp);
                }
                None => {
                    let _ = writeln!(s, "{:<12} {:<6} {:>6} {:>8} {:>8}", name, set, 0, "absent", "absent");
                }
            }
        }
        for (label, agg) in [("overall", self.overall), ("base", self.base), ("novel", self.novel)] {
            match agg {
                Some(a) => {
                    let _ = writeln!(s, "{:<12} {:<6} {:>6} {:>8.3} {:>8.3}", label, "", a.n_classes, a.amota, a.amotp);
                }
                None => {
                    let _ = writeln!(s, "{:<12} {:<6} {:>6} {:>8} {:>8}", label, "", 0, "-", "-");
                }
            }
        }
        s
    }
}
