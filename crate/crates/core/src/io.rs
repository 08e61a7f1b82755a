//! On-disk formats.
//!
//! A dataset directory holds `gt.jsonl`, `det3d.jsonl`, `det2d.jsonl` and one
//! `calib/<scene>.json` per scene. Tracker output is `tracks.jsonl`. Every
//! JSON Lines file has one record per line; unknown fields are rejected and
//! parse errors carry the file and 1-based line number.
//!
//! Floats are written with shortest round-trip formatting, so write then read
//! reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Box2D, Box3D, CameraCalib};
use crate::ovlabel::Detection2D;
use crate::simulator::{GtFrame, GtObject, Scene};
use crate::tracker::{
    AffinityModel, AffinityTrainingReport, ConfidenceModel, ConfidenceTrainingReport, Detection3D,
};

pub const GT_FILE: &str = "gt.jsonl";
pub const DET3D_FILE: &str = "det3d.jsonl";
pub const DET2D_FILE: &str = "det2d.jsonl";
pub const CALIB_DIR: &str = "calib";
pub const TRACKS_FILE: &str = "tracks.jsonl";
pub const AFFINITY_MODEL_FILE: &str = "affinity.json";
pub const CONFIDENCE_MODEL_FILE: &str = "confidence.json";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtRecord {
    pub scene: String,
    pub frame: u32,
    pub track_id: u64,
    pub class_name: String,
    #[serde(rename = "box")]
    pub bbox: Box3D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Det3dRecord {
    pub scene: String,
    pub frame: u32,
    pub detection_id: u64,
    #[serde(rename = "box")]
    pub bbox: Box3D,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Det2dRecord {
    pub scene: String,
    pub frame: u32,
    pub camera: String,
    /// `[x1, y1, x2, y2]` in pixels.
    #[serde(rename = "box")]
    pub bbox: Box2D,
    pub class_name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRecord {
    pub scene: String,
    pub frame: u32,
    pub track_id: u64,
    #[serde(rename = "box")]
    pub bbox: Box3D,
    pub class_name: String,
    pub confidence: f64,
}

/// `calib/<scene>.json`: the camera rig and the frame indices of the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibFile {
    pub scene: String,
    pub frame_indices: Vec<u32>,
    pub cameras: Vec<CameraCalib>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffinityModelFile {
    pub format_version: u32,
    pub seed: u64,
    pub model: AffinityModel,
    pub training: Option<AffinityTrainingReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceModelFile {
    pub format_version: u32,
    pub kind: String,
    pub seed: u64,
    pub lambda_c: f64,
    pub model: ConfidenceModel,
    pub training: Option<ConfidenceTrainingReport>,
}

impl ConfidenceModelFile {
    pub const KIND: &'static str = "squashed_linear";
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            line: 0,
            reason: e.to_string(),
        })?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    })?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })
}

fn calib_path(dir: &Path, scene: &str) -> PathBuf {
    dir.join(CALIB_DIR).join(format!("{scene}.json"))
}

/// Writes scenes as one dataset directory. Scene names must be unique.
pub fn write_dataset(dir: &Path, scenes: &[Scene]) -> Result<()> {
    let mut gt = Vec::new();
    let mut d3 = Vec::new();
    let mut d2 = Vec::new();
    for s in scenes {
        for (i, frame) in s.frames.iter().enumerate() {
            for o in &frame.objects {
                gt.push(GtRecord {
                    scene: s.name.clone(),
                    frame: frame.frame_index,
                    track_id: o.track_id,
                    class_name: o.class_name.clone(),
                    bbox: o.bbox,
                });
            }
            for d in s.detections_3d.get(i).into_iter().flatten() {
                d3.push(Det3dRecord {
                    scene: s.name.clone(),
                    frame: d.frame_index,
                    detection_id: d.detection_id,
                    bbox: d.bbox,
                    class_name: d.class_name.clone(),
                    score: d.source_score,
                });
            }
            for d in s.detections_2d.get(i).into_iter().flatten() {
                d2.push(Det2dRecord {
                    scene: s.name.clone(),
                    frame: d.frame_index,
                    camera: d.camera_id.clone(),
                    bbox: d.bbox,
                    class_name: d.class_name.clone(),
                    score: d.score,
                });
            }
        }
        write_json(
            &calib_path(dir, &s.name),
            &CalibFile {
                scene: s.name.clone(),
                frame_indices: s.frames.iter().map(|f| f.frame_index).collect(),
                cameras: s.calibs.values().cloned().collect(),
            },
        )?;
    }
    write_jsonl(&dir.join(GT_FILE), &gt)?;
    write_jsonl(&dir.join(DET3D_FILE), &d3)?;
    write_jsonl(&dir.join(DET2D_FILE), &d2)?;
    Ok(())
}

fn schema_error(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// Reads a dataset directory back into scenes, sorted by name. `gt.jsonl` may
/// be absent (no ground truth); the other files are required.
pub fn read_dataset(dir: &Path) -> Result<Vec<Scene>> {
    let calib_dir = dir.join(CALIB_DIR);
    let mut entries: Vec<PathBuf> = fs::read_dir(&calib_dir)
        .map_err(|e| Error::io(&calib_dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(&calib_dir, e)))
        .collect::<Result<_>>()?;
    entries.retain(|p| p.extension().is_some_and(|x| x == "json"));
    entries.sort();

    let mut scenes: BTreeMap<String, Scene> = BTreeMap::new();
    let mut frame_slot: BTreeMap<String, BTreeMap<u32, usize>> = BTreeMap::new();
    for path in entries {
        let c: CalibFile = read_json(&path)?;
        let mut calibs = BTreeMap::new();
        for cam in c.cameras {
            let id = cam.camera_id().to_string();
            if calibs.insert(id.clone(), cam).is_some() {
                return Err(schema_error(&path, 0, format!("camera `{id}` listed twice")));
            }
        }
        let mut slots = BTreeMap::new();
        for (i, &f) in c.frame_indices.iter().enumerate() {
            if i > 0 && f <= c.frame_indices[i - 1] {
                return Err(schema_error(&path, 0, "frame_indices must be strictly increasing"));
            }
            slots.insert(f, i);
        }
        let n = c.frame_indices.len();
        frame_slot.insert(c.scene.clone(), slots);
        scenes.insert(
            c.scene.clone(),
            Scene {
                name: c.scene,
                frames: c
                    .frame_indices
                    .iter()
                    .map(|&f| GtFrame {
                        frame_index: f,
                        objects: Vec::new(),
                    })
                    .collect(),
                calibs,
                detections_3d: vec![Vec::new(); n],
                detections_2d: vec![Vec::new(); n],
            },
        );
    }

    let locate = |path: &Path, line: usize, scene: &str, frame: u32| -> Result<usize> {
        frame_slot
            .get(scene)
            .ok_or_else(|| schema_error(path, line, format!("scene `{scene}` has no calibration file")))?
            .get(&frame)
            .copied()
            .ok_or_else(|| schema_error(path, line, format!("frame {frame} not listed for scene `{scene}`")))
    };

    let gt_path = dir.join(GT_FILE);
    if gt_path.exists() {
        for (i, r) in read_jsonl::<GtRecord>(&gt_path)?.into_iter().enumerate() {
            let slot = locate(&gt_path, i + 1, &r.scene, r.frame)?;
            if !crate::is_known_class(&r.class_name) {
                return Err(schema_error(&gt_path, i + 1, format!("unknown class `{}`", r.class_name)));
            }
            scenes.get_mut(&r.scene).expect("located").frames[slot].objects.push(GtObject {
                track_id: r.track_id,
                class_name: r.class_name,
                bbox: r.bbox,
            });
        }
    }
    let d3_path = dir.join(DET3D_FILE);
    for (i, r) in read_jsonl::<Det3dRecord>(&d3_path)?.into_iter().enumerate() {
        let slot = locate(&d3_path, i + 1, &r.scene, r.frame)?;
        let det = Detection3D::new(r.detection_id, r.frame, r.bbox, r.score, r.class_name)
            .map_err(|e| schema_error(&d3_path, i + 1, e.to_string()))?;
        scenes.get_mut(&r.scene).expect("located").detections_3d[slot].push(det);
    }
    let d2_path = dir.join(DET2D_FILE);
    for (i, r) in read_jsonl::<Det2dRecord>(&d2_path)?.into_iter().enumerate() {
        let slot = locate(&d2_path, i + 1, &r.scene, r.frame)?;
        if !(0.0..=1.0).contains(&r.score) {
            return Err(schema_error(&d2_path, i + 1, format!("score {} outside [0, 1]", r.score)));
        }
        let scene = scenes.get_mut(&r.scene).expect("located");
        if !scene.calibs.contains_key(&r.camera) {
            return Err(schema_error(&d2_path, i + 1, format!("camera `{}` has no calibration", r.camera)));
        }
        scene.detections_2d[slot].push(Detection2D {
            camera_id: r.camera,
            frame_index: r.frame,
            bbox: r.bbox,
            class_name: r.class_name,
            score: r.score,
        });
    }
    Ok(scenes.into_values().collect())
}

pub fn write_tracks(path: &Path, records: &[TrackRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn read_tracks(path: &Path) -> Result<Vec<TrackRecord>> {
    let records: Vec<TrackRecord> = read_jsonl(path)?;
    for (i, r) in records.iter().enumerate() {
        if !crate::is_known_class(&r.class_name) {
            return Err(schema_error(path, i + 1, format!("unknown class `{}`", r.class_name)));
        }
        if !(0.0..=1.0).contains(&r.confidence) {
            return Err(schema_error(path, i + 1, format!("confidence {} outside [0, 1]", r.confidence)));
        }
    }
    Ok(records)
}

pub fn read_affinity_model(path: &Path) -> Result<AffinityModelFile> {
    let f: AffinityModelFile = read_json(path)?;
    if f.format_version != MODEL_FORMAT_VERSION {
        return Err(schema_error(path, 0, format!("unsupported format_version {}", f.format_version)));
    }
    if let AffinityModel::LearnedLogistic(m) = &f.model {
        m.validate().map_err(|e| schema_error(path, 0, e.to_string()))?;
        if m.dim() != crate::tracker::EdgeFeature::DIM {
            return Err(schema_error(path, 0, "affinity weight vector has the wrong length"));
        }
    }
    Ok(f)
}

pub fn read_confidence_model(path: &Path) -> Result<ConfidenceModelFile> {
    let f: ConfidenceModelFile = read_json(path)?;
    if f.format_version != MODEL_FORMAT_VERSION {
        return Err(schema_error(path, 0, format!("unsupported format_version {}", f.format_version)));
    }
    if f.kind != ConfidenceModelFile::KIND {
        return Err(schema_error(path, 0, format!("unknown model kind `{}`", f.kind)));
    }
    f.model.0.validate().map_err(|e| schema_error(path, 0, e.to_string()))?;
    if f.model.0.dim() != crate::tracker::ConfidenceFeatures::DIM {
        return Err(schema_error(path, 0, "confidence weight vector has the wrong length"));
    }
    Ok(f)
}

/// Reader for nuScenes-format exports. Not implemented: real-data ingestion
/// is out of scope, and every call returns an error.
pub trait DatasetImporter {
    fn import(&self, source: &Path) -> Result<Vec<Scene>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NuScenesImporter;

impl DatasetImporter for NuScenesImporter {
    fn import(&self, source: &Path) -> Result<Vec<Scene>> {
        Err(schema_error(source, 0, "nuScenes import is not implemented"))
    }
}
