//! Scene-level orchestration shared by the command-line tool and the tests.
//!
//! Per scene: 3D proposals are labeled from the 2D detections, stripped of
//! class and score, tracked, and each finished track gets one class from the
//! consistency scorer. Scenes run in parallel on a pool bounded by `jobs`;
//! results are always gathered in scene order.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::assign_gt_track_ids;
use crate::config::{AffinityKind, PipelineConfig};
use crate::consistency::score_track;
use crate::error::{Error, Result};
use crate::io::{self, AffinityModelFile, ConfidenceModelFile, TrackRecord, MODEL_FORMAT_VERSION};
use crate::metrics::{evaluate_split, EvalScene, FrameData, GtObject, MetricsReport, PredObject};
use crate::ovlabel::{label_detections, Detection2D, LabelAssignment};
use crate::simulator::{generate_scene, Scene};
use crate::tracker::{
    train_affinity, train_confidence, AffinityModel, ConfidenceFeatures, ConfidenceModel, Detection3D, EdgeFeature,
    TrackId, Tracker, TrainOptions,
};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Models {
    pub affinity: AffinityModel,
    /// `None` gives every box confidence 1.0.
    pub confidence: Option<ConfidenceModel>,
}

impl Models {
    /// Picks the models the config asks for. A geometric affinity ignores
    /// `affinity`; a disabled confidence head ignores `confidence`.
    pub fn select(config: &PipelineConfig, affinity: Option<&AffinityModelFile>, confidence: Option<&ConfidenceModelFile>) -> Result<Self> {
        let affinity = match config.affinity_model {
            AffinityKind::Geometric => AffinityModel::default(),
            AffinityKind::Learned => affinity
                .map(|f| f.model.clone())
                .ok_or_else(|| Error::config("affinity_model", "learned affinity needs a trained model file"))?,
        };
        let confidence = if config.confidence_model {
            Some(
                confidence
                    .map(|f| f.model.clone())
                    .ok_or_else(|| Error::config("confidence_model", "enabled confidence head needs a trained model file"))?,
            )
        } else {
            None
        };
        Ok(Models { affinity, confidence })
    }
}

pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneRole {
    Train,
    Eval,
}

impl SceneRole {
    fn prefix(&self) -> &'static str {
        match self {
            SceneRole::Train => "train",
            SceneRole::Eval => "scene",
        }
    }
}

pub fn scene_seed(master: u64, role: SceneRole, index: usize) -> u64 {
    let tag = match role {
        SceneRole::Train => 0x7472_6169_6e00_0000u64,
        SceneRole::Eval => 0x6576_616c_0000_0000u64,
    };
    splitmix64(splitmix64(master ^ tag).wrapping_add(index as u64))
}

pub fn simulate_scenes(config: &PipelineConfig, role: SceneRole, count: usize, pool: &rayon::ThreadPool) -> Result<Vec<Scene>> {
    config.validate()?;
    pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let name = format!("{}-{i:04}", role.prefix());
                generate_scene(&name, &config.sim(scene_seed(config.seed, role, i)))
            })
            .collect()
    })
}

fn by_camera(dets: &[Detection2D]) -> BTreeMap<String, Vec<Detection2D>> {
    let mut m: BTreeMap<String, Vec<Detection2D>> = BTreeMap::new();
    for d in dets {
        m.entry(d.camera_id.clone()).or_default().push(d.clone());
    }
    m
}

fn frame_labels(scene: &Scene, i: usize, config: &PipelineConfig) -> Result<Vec<LabelAssignment>> {
    label_detections(&scene.detections_3d[i], &by_camera(&scene.detections_2d[i]), &scene.calibs, &config.label())
}

fn class_agnostic(dets: &[Detection3D]) -> Vec<Detection3D> {
    dets.iter().map(Detection3D::class_agnostic).collect()
}

/// Runs labeling, tracking and consistency scoring on one scene. Records are
/// sorted by frame, then track id; dropped tracks are absent.
pub fn track_scene(scene: &Scene, models: &Models, config: &PipelineConfig) -> Result<Vec<TrackRecord>> {
    let mut tracker = Tracker::new(config.tracker(), models.affinity.clone(), models.confidence.clone())?;
    for (i, frame) in scene.frames.iter().enumerate() {
        let labels = frame_labels(scene, i, config)?;
        tracker.step(frame.frame_index, &class_agnostic(&scene.detections_3d[i]), &labels)?;
    }
    let scoring = config.scoring();
    let mut records = Vec::new();
    for track in tracker.into_tracks() {
        let score = score_track(&track, &scoring)?;
        let Some(class) = score.class_name() else { continue };
        for o in &track.observations {
            records.push(TrackRecord {
                scene: scene.name.clone(),
                frame: o.frame_index,
                track_id: track.track_id,
                bbox: o.detection.bbox,
                class_name: class.to_string(),
                confidence: o.confidence,
            });
        }
    }
    records.sort_by_key(|r| (r.frame, r.track_id));
    Ok(records)
}

pub fn track_scenes(scenes: &[Scene], models: &Models, config: &PipelineConfig, pool: &rayon::ThreadPool) -> Result<Vec<TrackRecord>> {
    let per_scene: Vec<Vec<TrackRecord>> =
        pool.install(|| scenes.par_iter().map(|s| track_scene(s, models, config)).collect::<Result<_>>())?;
    Ok(per_scene.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingData {
    pub edges: Vec<(EdgeFeature, bool)>,
    pub confidence: Vec<(ConfidenceFeatures, f64)>,
}

/// Supervision from one scene. The geometric tracker runs over the scene;
/// detections inherit ground-truth ids from base-class objects only. An edge
/// is positive when both ends carry the same id, negative when the ids differ
/// or only one end has one, and unused when neither does. Confidence targets
/// are the source scores of detections the 3D detector labeled as a base class.
pub fn collect_training_data(scene: &Scene, config: &PipelineConfig) -> Result<TrainingData> {
    let split = config.split_definition();
    let mut tracker = Tracker::new(config.tracker(), AffinityModel::default(), None)?;
    let mut last_gt: BTreeMap<TrackId, Option<TrackId>> = BTreeMap::new();
    let mut data = TrainingData::default();
    for (i, frame) in scene.frames.iter().enumerate() {
        let dets = &scene.detections_3d[i];
        let base_gt: Vec<_> = frame
            .objects
            .iter()
            .filter(|o| split.is_base(&o.class_name))
            .map(|o| (o.bbox, o.track_id))
            .collect();
        let gt_of_index = assign_gt_track_ids(&base_gt, dets, config.gt_iou_min);
        let gt_of: BTreeMap<u64, TrackId> = gt_of_index.iter().map(|(&k, &v)| (dets[k].detection_id, v)).collect();

        let out = tracker.step_detailed(frame.frame_index, &class_agnostic(dets), &[])?;
        for e in &out.edges {
            let track_gt = last_gt.get(&e.track_id).copied().flatten();
            let det_gt = gt_of.get(&e.detection_id).copied();
            let label = match (track_gt, det_gt) {
                (Some(a), Some(b)) => a == b,
                (None, None) => continue,
                _ => false,
            };
            data.edges.push((e.feature, label));
        }
        for &(track, det) in out.matches.iter().chain(&out.births) {
            last_gt.insert(track, gt_of.get(&det).copied());
        }
        for d in dets {
            let base = d.class_name.as_deref().is_some_and(|c| split.is_base(c));
            if let (true, Some(score), Some(f)) = (base, d.source_score, out.confidence_inputs.get(&d.detection_id)) {
                data.confidence.push((*f, score));
            }
        }
    }
    Ok(data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModels {
    pub affinity: AffinityModelFile,
    pub confidence: ConfidenceModelFile,
}

pub fn train_models(scenes: &[Scene], config: &PipelineConfig, pool: &rayon::ThreadPool) -> Result<TrainedModels> {
    let parts: Vec<TrainingData> =
        pool.install(|| scenes.par_iter().map(|s| collect_training_data(s, config)).collect::<Result<_>>())?;
    let mut data = TrainingData::default();
    for p in parts {
        data.edges.extend(p.edges);
        data.confidence.extend(p.confidence);
    }
    let opts = TrainOptions {
        seed: config.seed,
        holdout_fraction: config.holdout_fraction,
        fit: config.fit(),
    };
    let (affinity, a_report) = train_affinity(&data.edges, &opts)?;
    let (confidence, c_report) = train_confidence(&data.confidence, config.lambda_c, &opts)?;
    Ok(TrainedModels {
        affinity: AffinityModelFile {
            format_version: MODEL_FORMAT_VERSION,
            seed: config.seed,
            model: affinity,
            training: Some(a_report),
        },
        confidence: ConfidenceModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kind: ConfidenceModelFile::KIND.to_string(),
            seed: config.seed,
            lambda_c: config.lambda_c,
            model: confidence,
            training: Some(c_report),
        },
    })
}

/// Scores track records against the ground truth of `scenes`. Every record
/// must refer to a scene and frame present there.
pub fn evaluate(scenes: &[Scene], tracks: &[TrackRecord], config: &PipelineConfig, pool: &rayon::ThreadPool) -> Result<MetricsReport> {
    let mut eval: BTreeMap<String, EvalScene> = scenes
        .iter()
        .map(|s| {
            let frames = s
                .frames
                .iter()
                .map(|f| {
                    let gt = f
                        .objects
                        .iter()
                        .map(|o| GtObject {
                            track_id: o.track_id,
                            class_name: o.class_name.clone(),
                            bbox: o.bbox,
                        })
                        .collect();
                    (f.frame_index, FrameData { gt, preds: Vec::new() })
                })
                .collect();
            (s.name.clone(), EvalScene { name: s.name.clone(), frames })
        })
        .collect();
    for r in tracks {
        let frame = eval
            .get_mut(&r.scene)
            .and_then(|s| s.frames.get_mut(&r.frame))
            .ok_or_else(|| Error::InvalidDetection(format!("track record for scene `{}` frame {} has no ground-truth frame", r.scene, r.frame)))?;
        frame.preds.push(PredObject {
            track_id: r.track_id,
            class_name: r.class_name.clone(),
            score: r.confidence,
            bbox: r.bbox,
        });
    }
    let scenes: Vec<EvalScene> = eval.into_values().collect();
    pool.install(|| evaluate_split(&scenes, &config.split_definition(), &config.eval()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub seed: u64,
    pub n_train_scenes: usize,
    pub n_eval_scenes: usize,
    pub n_track_records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub summary: PipelineSummary,
    pub models: Option<TrainedModels>,
    pub tracks: Vec<TrackRecord>,
    pub report: MetricsReport,
}

/// Simulate, train, track and evaluate in one go. With `out_dir`, every
/// intermediate is written there:
/// `train/`, `eval/` (datasets), `models/`, `tracks.jsonl`, `metrics.json`,
/// `metrics.txt` and `config.toml`.
pub fn run_pipeline(config: &PipelineConfig, out_dir: Option<&Path>) -> Result<PipelineOutput> {
    config.validate()?;
    let pool = thread_pool(config.jobs)?;
    let needs_training = config.affinity_model == AffinityKind::Learned || config.confidence_model;
    if needs_training && config.n_train_scenes == 0 {
        return Err(Error::config("n_train_scenes", "learned models need at least one training scene"));
    }
    let train = if needs_training {
        simulate_scenes(config, SceneRole::Train, config.n_train_scenes, &pool)?
    } else {
        Vec::new()
    };
    let eval_scenes = simulate_scenes(config, SceneRole::Eval, config.n_scenes, &pool)?;
    let trained = if needs_training {
        Some(train_models(&train, config, &pool)?)
    } else {
        None
    };
    let models = Models::select(
        config,
        trained.as_ref().map(|t| &t.affinity),
        trained.as_ref().map(|t| &t.confidence),
    )?;
    let tracks = track_scenes(&eval_scenes, &models, config, &pool)?;
    let report = evaluate(&eval_scenes, &tracks, config, &pool)?;

    if let Some(dir) = out_dir {
        if !train.is_empty() {
            io::write_dataset(&dir.join("train"), &train)?;
        }
        io::write_dataset(&dir.join("eval"), &eval_scenes)?;
        if let Some(t) = &trained {
            io::write_json(&dir.join("models").join(io::AFFINITY_MODEL_FILE), &t.affinity)?;
            io::write_json(&dir.join("models").join(io::CONFIDENCE_MODEL_FILE), &t.confidence)?;
        }
        io::write_tracks(&dir.join(io::TRACKS_FILE), &tracks)?;
        io::write_json(&dir.join("metrics.json"), &report)?;
        let table = report.to_table();
        std::fs::write(dir.join("metrics.txt"), &table).map_err(|e| Error::io(dir.join("metrics.txt"), e))?;
        let cfg_path = dir.join("config.toml");
        std::fs::write(&cfg_path, config.to_annotated_toml()).map_err(|e| Error::io(&cfg_path, e))?;
    }
    Ok(PipelineOutput {
        summary: PipelineSummary {
            seed: config.seed,
            n_train_scenes: train.len(),
            n_eval_scenes: eval_scenes.len(),
            n_track_records: tracks.len(),
        },
        models: trained,
        tracks,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PipelineConfig {
        PipelineConfig {
            n_scenes: 2,
            n_train_scenes: 2,
            n_frames: 12,
            train_epochs: 300,
            jobs: 2,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn seeds_differ_by_role_and_index() {
        let a = scene_seed(0, SceneRole::Train, 0);
        assert_ne!(a, scene_seed(0, SceneRole::Eval, 0));
        assert_ne!(a, scene_seed(0, SceneRole::Train, 1));
        assert_ne!(a, scene_seed(1, SceneRole::Train, 0));
    }

    #[test]
    fn noiseless_tracks_reproduce_ground_truth() {
        let cfg = PipelineConfig { affinity_model: AffinityKind::Geometric, confidence_model: false, ..small() }.noiseless();
        let out = run_pipeline(&cfg, None).unwrap();
        for c in out.report.classes.values() {
            assert_eq!(c.amota, 1.0, "{}", c.class_name);
            assert_eq!(c.amotp, 0.0);
        }
    }

    #[test]
    fn empty_detections_give_empty_output() {
        let pool = thread_pool(1).unwrap();
        let mut scenes = simulate_scenes(&small(), SceneRole::Eval, 1, &pool).unwrap();
        for d in &mut scenes[0].detections_3d {
            d.clear();
        }
        assert!(track_scene(&scenes[0], &Models::default(), &small()).unwrap().is_empty());
    }

    #[test]
    fn training_uses_base_classes_only() {
        let cfg = small();
        let pool = thread_pool(1).unwrap();
        let scenes = simulate_scenes(&cfg, SceneRole::Train, 1, &pool).unwrap();
        let data = collect_training_data(&scenes[0], &cfg).unwrap();
        assert!(data.edges.iter().any(|(_, y)| *y) && data.edges.iter().any(|(_, y)| !*y));
        let split = cfg.split_definition();
        let n_base: usize = scenes[0]
            .detections_3d
            .iter()
            .flatten()
            .filter(|d| d.class_name.as_deref().is_some_and(|c| split.is_base(c)))
            .count();
        assert_eq!(data.confidence.len(), n_base);
    }

    #[test]
    fn pipeline_is_deterministic_across_thread_counts() {
        let a = run_pipeline(&small(), None).unwrap();
        let b = run_pipeline(&PipelineConfig { jobs: 1, ..small() }, None).unwrap();
        assert_eq!(a.tracks, b.tracks);
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn unknown_track_scene_is_rejected() {
        let pool = thread_pool(1).unwrap();
        let scenes = simulate_scenes(&small(), SceneRole::Eval, 1, &pool).unwrap();
        let bad = TrackRecord {
            scene: "elsewhere".into(),
            frame: 0,
            track_id: 0,
            bbox: scenes[0].frames[0].objects[0].bbox,
            class_name: "car".into(),
            confidence: 1.0,
        };
        assert!(evaluate(&scenes, &[bad], &small(), &pool).is_err());
    }
}
