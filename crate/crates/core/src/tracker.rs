//! Class-agnostic track formation.
//!
//! Each frame, live tracks are predicted forward at constant velocity and
//! linked to detections through a distance-truncated bipartite graph. Edges are
//! scored by an [`AffinityModel`]; a Hungarian solve on `1 - affinity` gives the
//! one-to-one matching. Unmatched detections start tracks, tracks that miss
//! more than `max_age` consecutive frames die. Every matched or new detection
//! gets a confidence from the [`ConfidenceModel`].
//!
//! Detection class names and source scores are carried for training and
//! bookkeeping but never read here.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::assignment::{hungarian, CostMatrix};
use crate::error::{Error, Result};
use crate::geometry::{bev_center_distance, iou_3d, normalize_angle, Box3D};
use crate::learn::{self, FitOptions, Loss, SquashedLinear};
use crate::ovlabel::{LabelAssignment, LabelMatch};

pub type TrackId = u64;

pub const DEFAULT_D_MAX_M: f64 = 3.0;
pub const DEFAULT_AFFINITY_MIN: f64 = 0.05;
pub const DEFAULT_MAX_AGE: u32 = 3;
pub const DEFAULT_FRAME_PERIOD_S: f64 = 0.5;
pub const DEFAULT_LAMBDA_C: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection3D {
    pub detection_id: u64,
    pub frame_index: u32,
    pub bbox: Box3D,
    pub source_score: Option<f64>,
    pub class_name: Option<String>,
}

impl Detection3D {
    pub fn new(
        detection_id: u64,
        frame_index: u32,
        bbox: Box3D,
        source_score: Option<f64>,
        class_name: Option<String>,
    ) -> Result<Self> {
        if let Some(s) = source_score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidDetection(format!(
                    "detection {detection_id}: source score {s} outside [0, 1]"
                )));
            }
        }
        Ok(Detection3D {
            detection_id,
            frame_index,
            bbox,
            source_score,
            class_name,
        })
    }

    /// Copy with class name and source score removed.
    pub fn class_agnostic(&self) -> Detection3D {
        Detection3D {
            source_score: None,
            class_name: None,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackState {
    Active,
    Coasting { missed: u32 },
    Dead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub frame_index: u32,
    pub detection: Detection3D,
    pub confidence: f64,
    pub label: Option<LabelMatch>,
    /// Affinity of the edge that extended the track; `None` for the first box.
    pub affinity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: TrackId,
    pub observations: Vec<Observation>,
    pub state: TrackState,
}

impl Track {
    fn last(&self) -> &Observation {
        self.observations
            .last()
            .expect("tracks are created with one observation")
    }

    pub fn last_box(&self) -> &Box3D {
        &self.last().detection.bbox
    }

    pub fn last_frame(&self) -> u32 {
        self.last().frame_index
    }

    pub fn missed(&self) -> u32 {
        match self.state {
            TrackState::Coasting { missed } => missed,
            _ => 0,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Constant-velocity prediction of the last observed box `dt` seconds ahead.
pub fn predict_track_position(track: &Track, dt: f64) -> Box3D {
    let b = track.last_box();
    let [vx, vy] = b.velocity();
    b.translated(vx * dt, vy * dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeFeature {
    /// BEV distance from the predicted track center to the detection.
    pub bev_distance: f64,
    /// 3D IoU of the predicted track box and the detection.
    pub iou_3d: f64,
    /// `ln(w/w'), ln(l/l'), ln(h/h')`, track over detection.
    pub size_log_ratio: [f64; 3],
    pub yaw_diff: f64,
    /// BEV distance between the track's last center and the detection center
    /// moved back by the detection's own velocity.
    pub velocity_consistency: f64,
}

impl EdgeFeature {
    pub const DIM: usize = 7;

    pub fn between(last: &Box3D, predicted: &Box3D, det: &Box3D, dt: f64) -> Self {
        let (ts, ds) = (last.size(), det.size());
        let [vx, vy] = det.velocity();
        let back = det.translated(-vx * dt, -vy * dt);
        EdgeFeature {
            bev_distance: bev_center_distance(predicted, det),
            iou_3d: iou_3d(predicted, det),
            size_log_ratio: [(ts[0] / ds[0]).ln(), (ts[1] / ds[1]).ln(), (ts[2] / ds[2]).ln()],
            yaw_diff: normalize_angle(last.yaw() - det.yaw()).abs(),
            velocity_consistency: bev_center_distance(last, &back),
        }
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let [a, b, c] = self.size_log_ratio;
        vec![
            self.bev_distance,
            self.iou_3d,
            a.abs(),
            b.abs(),
            c.abs(),
            self.yaw_diff,
            self.velocity_consistency,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub track_id: TrackId,
    pub detection_id: u64,
    pub feature: EdgeFeature,
    track_index: usize,
    detection_index: usize,
}

/// Edges from each non-dead track, predicted to `frame_index`, to every
/// detection within `d_max_m` of the prediction in BEV.
pub fn build_association_graph(
    tracks: &[Track],
    frame_index: u32,
    detections: &[Detection3D],
    d_max_m: f64,
    frame_period_s: f64,
) -> Vec<Edge> {
    let mut edges = Vec::new();
    for (ti, track) in tracks.iter().enumerate() {
        if track.state == TrackState::Dead {
            continue;
        }
        let gap = frame_index.saturating_sub(track.last_frame());
        let dt = f64::from(gap) * frame_period_s;
        let predicted = predict_track_position(track, dt);
        for (di, det) in detections.iter().enumerate() {
            if bev_center_distance(&predicted, &det.bbox) > d_max_m {
                continue;
            }
            edges.push(Edge {
                track_id: track.track_id,
                detection_id: det.detection_id,
                feature: EdgeFeature::between(track.last_box(), &predicted, &det.bbox, dt),
                track_index: ti,
                detection_index: di,
            });
        }
    }
    edges
}

/// Hand-set affinity: IoU when boxes overlap, otherwise a distance-decayed
/// score capped at `zero_iou_cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricAffinity {
    pub distance_scale_m: f64,
    pub zero_iou_cap: f64,
}

impl Default for GeometricAffinity {
    fn default() -> Self {
        GeometricAffinity {
            distance_scale_m: DEFAULT_D_MAX_M,
            zero_iou_cap: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AffinityModel {
    Geometric(GeometricAffinity),
    LearnedLogistic(SquashedLinear),
}

impl Default for AffinityModel {
    fn default() -> Self {
        AffinityModel::Geometric(GeometricAffinity::default())
    }
}

/// Likelihood in `[0, 1]` that the edge joins one object.
pub fn affinity(model: &AffinityModel, edge: &EdgeFeature) -> f64 {
    match model {
        AffinityModel::Geometric(g) => {
            if edge.iou_3d > 0.0 {
                edge.iou_3d
            } else {
                let s = g.distance_scale_m;
                (-edge.bev_distance / s).exp() * (-edge.velocity_consistency / s).exp() * g.zero_iou_cap
            }
        }
        AffinityModel::LearnedLogistic(m) => m.predict(&edge.to_vector()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceFeatures {
    /// BEV distance to the closest other detection in the frame.
    pub nearest_neighbor_m: f64,
    /// Observations in the track including this one.
    pub track_age: u32,
    pub speed_mps: f64,
    pub volume_m3: f64,
    /// Affinity of the matched edge, 0 for a new track.
    pub edge_affinity: f64,
}

impl ConfidenceFeatures {
    pub const DIM: usize = 5;
    const NEIGHBOR_CAP_M: f64 = 30.0;
    const AGE_CAP: u32 = 10;

    pub fn to_vector(&self) -> Vec<f64> {
        vec![
            self.nearest_neighbor_m.min(Self::NEIGHBOR_CAP_M),
            f64::from(self.track_age.min(Self::AGE_CAP)),
            self.speed_mps,
            self.volume_m3.ln_1p(),
            self.edge_affinity,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfidenceModel(pub SquashedLinear);

impl ConfidenceModel {
    pub fn zeros() -> Self {
        ConfidenceModel(SquashedLinear::zeros(ConfidenceFeatures::DIM))
    }
}

pub fn predict_confidence(model: &ConfidenceModel, features: &ConfidenceFeatures) -> f64 {
    model.0.predict(&features.to_vector())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub seed: u64,
    pub holdout_fraction: f64,
    pub fit: FitOptions,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            seed: 0,
            holdout_fraction: 0.2,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityTrainingReport {
    pub seed: u64,
    pub epochs: usize,
    pub n_train: usize,
    pub n_holdout: usize,
    pub n_positive: usize,
    pub train_accuracy: f64,
    pub holdout_accuracy: Option<f64>,
}

/// Fits the logistic edge classifier. Needs both positive and negative edges.
pub fn train_affinity(
    labeled_edges: &[(EdgeFeature, bool)],
    opts: &TrainOptions,
) -> Result<(AffinityModel, AffinityTrainingReport)> {
    let n_positive = labeled_edges.iter().filter(|(_, y)| *y).count();
    if n_positive == 0 || n_positive == labeled_edges.len() {
        return Err(Error::TrainingData(format!(
            "affinity training needs positive and negative edges, got {n_positive} of {}",
            labeled_edges.len()
        )));
    }
    let (train_idx, hold_idx) = learn::split_indices(labeled_edges.len(), opts.holdout_fraction, opts.seed);
    let gather = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<bool>) {
        idx.iter()
            .map(|&i| (labeled_edges[i].0.to_vector(), labeled_edges[i].1))
            .unzip()
    };
    let (xs, ys) = gather(&train_idx);
    if !ys.iter().any(|y| *y) || ys.iter().all(|y| *y) {
        return Err(Error::TrainingData("training split lost one class".into()));
    }
    let targets: Vec<f64> = ys.iter().map(|&y| if y { 1.0 } else { 0.0 }).collect();
    let model = learn::fit(&xs, &targets, Loss::CrossEntropy, &opts.fit)?;
    let (hx, hy) = gather(&hold_idx);
    let report = AffinityTrainingReport {
        seed: opts.seed,
        epochs: opts.fit.epochs,
        n_train: xs.len(),
        n_holdout: hx.len(),
        n_positive,
        train_accuracy: learn::accuracy(&model, &xs, &ys),
        holdout_accuracy: (!hx.is_empty()).then(|| learn::accuracy(&model, &hx, &hy)),
    };
    Ok((AffinityModel::LearnedLogistic(model), report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceTrainingReport {
    pub seed: u64,
    pub epochs: usize,
    pub lambda_c: f64,
    pub n_train: usize,
    pub n_holdout: usize,
    pub train_mse: f64,
    pub holdout_mse: Option<f64>,
    /// Training MSE of the constant predictor at the training-target mean.
    pub baseline_train_mse: f64,
}

/// Fits the confidence regressor with squared error, the loss gradient scaled
/// by `lambda_c`.
pub fn train_confidence(
    examples: &[(ConfidenceFeatures, f64)],
    lambda_c: f64,
    opts: &TrainOptions,
) -> Result<(ConfidenceModel, ConfidenceTrainingReport)> {
    if examples.is_empty() {
        return Err(Error::TrainingData("confidence training needs at least one example".into()));
    }
    if let Some((_, s)) = examples.iter().find(|(_, s)| !(0.0..=1.0).contains(s)) {
        return Err(Error::TrainingData(format!("source score {s} outside [0, 1]")));
    }
    if !(lambda_c > 0.0 && lambda_c.is_finite()) {
        return Err(Error::TrainingData(format!("lambda_c must be positive, got {lambda_c}")));
    }
    let (train_idx, hold_idx) = learn::split_indices(examples.len(), opts.holdout_fraction, opts.seed);
    let gather = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        idx.iter().map(|&i| (examples[i].0.to_vector(), examples[i].1)).unzip()
    };
    let (xs, ys) = gather(&train_idx);
    let fit_opts = FitOptions {
        loss_weight: lambda_c,
        ..opts.fit
    };
    let model = learn::fit(&xs, &ys, Loss::SquaredError, &fit_opts)?;
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let baseline = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64;
    let (hx, hy) = gather(&hold_idx);
    let report = ConfidenceTrainingReport {
        seed: opts.seed,
        epochs: opts.fit.epochs,
        lambda_c,
        n_train: xs.len(),
        n_holdout: hx.len(),
        train_mse: learn::mean_squared_error(&model, &xs, &ys),
        holdout_mse: (!hx.is_empty()).then(|| learn::mean_squared_error(&model, &hx, &hy)),
        baseline_train_mse: baseline,
    };
    Ok((ConfidenceModel(model), report))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub d_max_m: f64,
    pub affinity_min: f64,
    pub max_age: u32,
    pub frame_period_s: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            d_max_m: DEFAULT_D_MAX_M,
            affinity_min: DEFAULT_AFFINITY_MIN,
            max_age: DEFAULT_MAX_AGE,
            frame_period_s: DEFAULT_FRAME_PERIOD_S,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_max_m > 0.0 && self.d_max_m.is_finite()) {
            return Err(Error::config("d_max_m", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.affinity_min) {
            return Err(Error::config("affinity_min", "must lie in [0, 1]"));
        }
        if !(self.frame_period_s > 0.0 && self.frame_period_s.is_finite()) {
            return Err(Error::config("frame_period_s", "must be positive"));
        }
        Ok(())
    }
}

/// State of one tracked box after a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSnapshot {
    pub track_id: TrackId,
    pub frame_index: u32,
    pub bbox: Box3D,
    pub confidence: f64,
    pub label: Option<LabelMatch>,
    pub is_new: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    /// Tracks that received a detection this frame, by track id.
    pub snapshots: Vec<TrackSnapshot>,
    /// Association graph the frame was matched on.
    pub edges: Vec<Edge>,
    /// `(track_id, detection_id)` for every extended track.
    pub matches: Vec<(TrackId, u64)>,
    /// `(track_id, detection_id)` for every track started this frame.
    pub births: Vec<(TrackId, u64)>,
    /// Confidence inputs for every matched or new detection, by detection id.
    pub confidence_inputs: BTreeMap<u64, ConfidenceFeatures>,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    affinity: AffinityModel,
    confidence: Option<ConfidenceModel>,
    live: Vec<Track>,
    finished: Vec<Track>,
    next_id: TrackId,
    last_frame: Option<u32>,
}

impl Tracker {
    /// With `confidence == None` every box gets confidence 1.0.
    pub fn new(config: TrackerConfig, affinity: AffinityModel, confidence: Option<ConfidenceModel>) -> Result<Self> {
        config.validate()?;
        Ok(Tracker {
            config,
            affinity,
            confidence,
            live: Vec::new(),
            finished: Vec::new(),
            next_id: 0,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Tracks that are not dead.
    pub fn live_tracks(&self) -> &[Track] {
        &self.live
    }

    /// Every track ever started, sorted by id.
    pub fn into_tracks(self) -> Vec<Track> {
        let mut all = self.finished;
        all.extend(self.live);
        all.sort_by_key(|t| t.track_id);
        all
    }

    /// Edges from live tracks to this frame's detections.
    pub fn association_graph(&self, frame_index: u32, detections: &[Detection3D]) -> Vec<Edge> {
        build_association_graph(&self.live, frame_index, detections, self.config.d_max_m, self.config.frame_period_s)
    }

    fn check_frame(&self, frame_index: u32, detections: &[Detection3D]) -> Result<()> {
        if let Some(last) = self.last_frame {
            if frame_index <= last {
                return Err(Error::OutOfOrderFrame { last, got: frame_index });
            }
        }
        let mut seen = BTreeSet::new();
        for d in detections {
            if d.frame_index != frame_index {
                return Err(Error::FrameMismatch {
                    expected: frame_index,
                    got: d.frame_index,
                });
            }
            if !seen.insert(d.detection_id) {
                return Err(Error::DuplicateDetection {
                    frame: frame_index,
                    detection_id: d.detection_id,
                });
            }
        }
        Ok(())
    }

    fn confidence_of(&self, f: &ConfidenceFeatures) -> f64 {
        self.confidence.as_ref().map_or(1.0, |m| predict_confidence(m, f))
    }

    pub fn step(
        &mut self,
        frame_index: u32,
        detections: &[Detection3D],
        labels: &[LabelAssignment],
    ) -> Result<Vec<TrackSnapshot>> {
        Ok(self.step_detailed(frame_index, detections, labels)?.snapshots)
    }

    /// Advances one frame. `labels` is matched to detections by id; missing
    /// entries count as unknown.
    pub fn step_detailed(
        &mut self,
        frame_index: u32,
        detections: &[Detection3D],
        labels: &[LabelAssignment],
    ) -> Result<StepOutput> {
        self.check_frame(frame_index, detections)?;
        self.last_frame = Some(frame_index);
        let label_of: BTreeMap<u64, &LabelMatch> = labels
            .iter()
            .filter_map(|l| l.matched.as_ref().map(|m| (l.detection_id, m)))
            .collect();

        let edges = self.association_graph(frame_index, detections);
        let mut costs = CostMatrix::filled(self.live.len(), detections.len(), CostMatrix::FORBIDDEN);
        let mut edge_affinity = BTreeMap::new();
        for e in &edges {
            let a = affinity(&self.affinity, &e.feature);
            if a >= self.config.affinity_min && a > 0.0 {
                costs.set(e.track_index, e.detection_index, 1.0 - a);
                edge_affinity.insert((e.track_index, e.detection_index), a);
            }
        }
        let assignment = hungarian(&costs);

        let nearest = nearest_neighbor_distances(detections);
        let mut out = StepOutput {
            edges,
            ..StepOutput::default()
        };
        let mut detection_used = vec![false; detections.len()];
        let mut track_matched = vec![false; self.live.len()];

        for &(ti, di) in &assignment.pairs {
            let det = &detections[di];
            let a = edge_affinity[&(ti, di)];
            let features = ConfidenceFeatures {
                nearest_neighbor_m: nearest[di],
                track_age: self.live[ti].observations.len() as u32 + 1,
                speed_mps: det.bbox.speed(),
                volume_m3: det.bbox.volume(),
                edge_affinity: a,
            };
            let confidence = self.confidence_of(&features);
            let track = &mut self.live[ti];
            track.observations.push(Observation {
                frame_index,
                detection: det.clone(),
                confidence,
                label: label_of.get(&det.detection_id).map(|m| (*m).clone()),
                affinity: Some(a),
            });
            track.state = TrackState::Active;
            detection_used[di] = true;
            track_matched[ti] = true;
            out.matches.push((track.track_id, det.detection_id));
            out.confidence_inputs.insert(det.detection_id, features);
        }

        let max_age = self.config.max_age;
        let mut still_live = Vec::with_capacity(self.live.len());
        for (ti, mut track) in std::mem::take(&mut self.live).into_iter().enumerate() {
            if !track_matched[ti] {
                let missed = track.missed() + 1;
                if missed > max_age {
                    track.state = TrackState::Dead;
                    self.finished.push(track);
                    continue;
                }
                track.state = TrackState::Coasting { missed };
            }
            still_live.push(track);
        }
        self.live = still_live;

        for (di, det) in detections.iter().enumerate() {
            if detection_used[di] {
                continue;
            }
            let features = ConfidenceFeatures {
                nearest_neighbor_m: nearest[di],
                track_age: 1,
                speed_mps: det.bbox.speed(),
                volume_m3: det.bbox.volume(),
                edge_affinity: 0.0,
            };
            let confidence = self.confidence_of(&features);
            let track_id = self.next_id;
            self.next_id += 1;
            self.live.push(Track {
                track_id,
                observations: vec![Observation {
                    frame_index,
                    detection: det.clone(),
                    confidence,
                    label: label_of.get(&det.detection_id).map(|m| (*m).clone()),
                    affinity: None,
                }],
                state: TrackState::Active,
            });
            out.births.push((track_id, det.detection_id));
            out.confidence_inputs.insert(det.detection_id, features);
        }

        out.snapshots = self
            .live
            .iter()
            .filter(|t| t.state == TrackState::Active)
            .map(|t| {
                let o = t.last();
                TrackSnapshot {
                    track_id: t.track_id,
                    frame_index,
                    bbox: o.detection.bbox,
                    confidence: o.confidence,
                    label: o.label.clone(),
                    is_new: t.observations.len() == 1,
                }
            })
            .collect();
        out.snapshots.sort_by_key(|s| s.track_id);
        Ok(out)
    }
}

fn nearest_neighbor_distances(detections: &[Detection3D]) -> Vec<f64> {
    detections
        .iter()
        .enumerate()
        .map(|(i, a)| {
            detections
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| bev_center_distance(&a.bbox, &b.bbox))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}
