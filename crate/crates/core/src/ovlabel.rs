//! Open-vocabulary labels for 3D detections from 2D detections.
//!
//! Each 3D box is projected into every camera; its label is the class of the
//! 2D detection with the highest image-plane IoU over all cameras. Boxes with
//! no overlapping 2D detection stay unknown.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou_2d, project_box_to_image, Box2D, CameraCalib};
use crate::tracker::Detection3D;

pub const DEFAULT_SCORE_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection2D {
    pub camera_id: String,
    pub frame_index: u32,
    #[serde(rename = "box")]
    pub bbox: Box2D,
    pub class_name: String,
    pub score: f64,
}

/// The 2D detection that supplied a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMatch {
    pub class_name: String,
    pub camera_id: String,
    #[serde(rename = "box")]
    pub bbox: Box2D,
    pub score: f64,
    pub iou_2d: f64,
    pub image_width: f64,
    pub image_height: f64,
}

/// Label for one 3D detection; `matched == None` means unknown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAssignment {
    pub detection_id: u64,
    pub matched: Option<LabelMatch>,
}

impl LabelAssignment {
    pub fn unknown(detection_id: u64) -> Self {
        LabelAssignment {
            detection_id,
            matched: None,
        }
    }

    pub fn class_name(&self) -> Option<&str> {
        self.matched.as_ref().map(|m| m.class_name.as_str())
    }

    pub fn is_unknown(&self) -> bool {
        self.matched.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelConfig {
    /// Minimum IoU for a label. Any strictly positive overlap qualifies at 0.
    pub min_iou_2d: f64,
    /// 2D detections scoring below this are ignored.
    pub score_floor: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            min_iou_2d: 0.0,
            score_floor: DEFAULT_SCORE_FLOOR,
        }
    }
}

/// Labels every detection in one frame. `dets2d` is keyed by camera id; every
/// camera with detections needs an entry in `calibs`. Ties in IoU keep the
/// first candidate in camera-id then input order.
pub fn label_detections(
    dets3d: &[Detection3D],
    dets2d: &BTreeMap<String, Vec<Detection2D>>,
    calibs: &BTreeMap<String, CameraCalib>,
    config: &LabelConfig,
) -> Result<Vec<LabelAssignment>> {
    let frame = dets3d
        .first()
        .map(|d| d.frame_index)
        .or_else(|| dets2d.values().flatten().next().map(|d| d.frame_index));
    if let Some(expected) = frame {
        let frames = dets3d
            .iter()
            .map(|d| d.frame_index)
            .chain(dets2d.values().flatten().map(|d| d.frame_index));
        for got in frames {
            if got != expected {
                return Err(Error::FrameMismatch { expected, got });
            }
        }
    }
    let mut cameras = Vec::with_capacity(dets2d.len());
    for (camera_id, dets) in dets2d {
        let calib = calibs
            .get(camera_id)
            .ok_or_else(|| Error::MissingCalibration(camera_id.clone()))?;
        if let Some(d) = dets.iter().find(|d| &d.camera_id != camera_id) {
            return Err(Error::InvalidDetection(format!(
                "2D detection for camera `{}` filed under `{camera_id}`",
                d.camera_id
            )));
        }
        cameras.push((calib, dets));
    }

    Ok(dets3d
        .iter()
        .map(|det| {
            let mut best: Option<(f64, &Detection2D, &CameraCalib)> = None;
            for (calib, dets) in &cameras {
                let Some(projected) = project_box_to_image(&det.bbox, calib) else {
                    continue;
                };
                for d in dets.iter().filter(|d| d.score >= config.score_floor) {
                    let iou = iou_2d(&projected, &d.bbox);
                    if iou <= 0.0 || iou < config.min_iou_2d {
                        continue;
                    }
                    if best.is_none_or(|(b, _, _)| iou > b) {
                        best = Some((iou, d, calib));
                    }
                }
            }
            LabelAssignment {
                detection_id: det.detection_id,
                matched: best.map(|(iou, d, calib)| LabelMatch {
                    class_name: d.class_name.clone(),
                    camera_id: d.camera_id.clone(),
                    bbox: d.bbox,
                    score: d.score,
                    iou_2d: iou,
                    image_width: calib.image_width(),
                    image_height: calib.image_height(),
                }),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Box3D;

    fn cam() -> CameraCalib {
        CameraCalib::new(
            "front",
            [500.0, 500.0, 800.0, 450.0],
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [0.0; 3],
            1600,
            900,
        )
        .unwrap()
    }

    fn det3(id: u64, center: [f64; 3]) -> Detection3D {
        let b = Box3D::new(center, [2.0, 2.0, 2.0], 0.0, [0.0; 2]).unwrap();
        Detection3D::new(id, 0, b, None, None).unwrap()
    }

    fn det2(class: &str, b: Box2D, score: f64) -> Detection2D {
        Detection2D {
            camera_id: "front".into(),
            frame_index: 0,
            bbox: b,
            class_name: class.into(),
            score,
        }
    }

    fn calibs() -> BTreeMap<String, CameraCalib> {
        BTreeMap::from([("front".to_string(), cam())])
    }

    #[test]
    fn exact_projection_takes_label() {
        let d = det3(0, [0.0, 0.0, 10.0]);
        let proj = project_box_to_image(&d.bbox, &cam()).unwrap();
        let dets2d = BTreeMap::from([("front".to_string(), vec![det2("bus", proj, 0.4)])]);
        let out = label_detections(&[d], &dets2d, &calibs(), &LabelConfig::default()).unwrap();
        let m = out[0].matched.as_ref().unwrap();
        assert_eq!(m.class_name, "bus");
        assert_eq!(m.iou_2d, 1.0);
        assert_eq!(m.image_width, 1600.0);
    }

    #[test]
    fn behind_camera_is_unknown() {
        let d = det3(3, [0.0, 0.0, -10.0]);
        let any = Box2D::new(0.0, 0.0, 1600.0, 900.0).unwrap();
        let dets2d = BTreeMap::from([("front".to_string(), vec![det2("car", any, 0.9)])]);
        let out = label_detections(&[d], &dets2d, &calibs(), &LabelConfig::default()).unwrap();
        assert!(out[0].is_unknown());
        assert_eq!(out[0].detection_id, 3);
    }

    #[test]
    fn highest_iou_wins() {
        // Projection of the 2 m cube at depth 10 spans 800 +- 500/9 in both axes.
        let d = det3(0, [0.0, 0.0, 10.0]);
        let p = project_box_to_image(&d.bbox, &cam()).unwrap();
        let side = p.width();
        // Horizontal shift s gives IoU (side - s) / (side + s).
        let shift_for = |iou: f64| side * (1.0 - iou) / (1.0 + iou);
        let shifted = |s: f64| Box2D::new(p.x1() + s, p.y1(), p.x2() + s, p.y2()).unwrap();
        let car = shifted(shift_for(0.6));
        let truck = shifted(-shift_for(0.4));
        assert!((iou_2d(&p, &car) - 0.6).abs() < 1e-9);
        assert!((iou_2d(&p, &truck) - 0.4).abs() < 1e-9);
        let dets2d = BTreeMap::from([(
            "front".to_string(),
            vec![det2("truck", truck, 0.9), det2("car", car, 0.2)],
        )]);
        let out = label_detections(&[d], &dets2d, &calibs(), &LabelConfig::default()).unwrap();
        assert_eq!(out[0].class_name(), Some("car"));

        let strict = LabelConfig {
            min_iou_2d: 0.7,
            ..LabelConfig::default()
        };
        let out = label_detections(&[det3(0, [0.0, 0.0, 10.0])], &dets2d, &calibs(), &strict).unwrap();
        assert!(out[0].is_unknown());
    }

    #[test]
    fn score_floor_filters() {
        let d = det3(0, [0.0, 0.0, 10.0]);
        let proj = project_box_to_image(&d.bbox, &cam()).unwrap();
        let dets2d = BTreeMap::from([("front".to_string(), vec![det2("bus", proj, 0.005)])]);
        let out = label_detections(&[d], &dets2d, &calibs(), &LabelConfig::default()).unwrap();
        assert!(out[0].is_unknown());
    }

    #[test]
    fn missing_calibration_is_an_error() {
        let d = det3(0, [0.0, 0.0, 10.0]);
        let any = Box2D::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let mut x = det2("car", any, 0.5);
        x.camera_id = "rear".into();
        let dets2d = BTreeMap::from([("rear".to_string(), vec![x])]);
        let err = label_detections(&[d], &dets2d, &calibs(), &LabelConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MissingCalibration(c) if c == "rear"));
    }

    #[test]
    fn mixed_frames_rejected() {
        let mut d = det3(0, [0.0, 0.0, 10.0]);
        d.frame_index = 4;
        let any = Box2D::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let dets2d = BTreeMap::from([("front".to_string(), vec![det2("car", any, 0.5)])]);
        assert!(label_detections(&[d], &dets2d, &calibs(), &LabelConfig::default()).is_err());
    }
}
