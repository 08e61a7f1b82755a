//! Synthetic driving scenes.
//!
//! Objects of the seven tracked classes move at near-constant velocity around
//! an ego vehicle parked at the origin with a ring of cameras. Each frame
//! yields ground truth, noisy 3D proposals and corrupted 2D open-vocabulary
//! detections. Ground truth, 3D corruption and 2D corruption draw from separate
//! ChaCha streams, so changing a noise setting never moves the objects.
//!
//! 3D proposal score: `clamp(1 - |center error| / s0 + eps, 0, 1)` with
//! `eps ~ N(0, score_noise_sigma)`; false positives score `U(0, fp_score_max)`.
//!
//! 2D mislabel probability grows with range: `1 - (1 - p)^(d / d_ref)`, where
//! `p` is the per-class rate and `d` the object's distance from the ego.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, project_box_to_image, Box2D, Box3D, CameraCalib};
use crate::ovlabel::{Detection2D, DEFAULT_SCORE_FLOOR};
use crate::tracker::{Detection3D, TrackId};
use crate::CLASSES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrior {
    pub count: usize,
    /// Mean width, length, height in meters.
    pub size_mean_m: [f64; 3],
    /// Relative standard deviation per dimension.
    pub size_sigma_frac: f64,
    pub speed_range_mps: [f64; 2],
}

fn prior(count: usize, size: [f64; 3], max_speed: f64) -> ClassPrior {
    ClassPrior {
        count,
        size_mean_m: size,
        size_sigma_frac: 0.05,
        speed_range_mps: [0.0, max_speed],
    }
}

pub fn default_class_priors() -> BTreeMap<String, ClassPrior> {
    [
        ("bicycle", prior(3, [0.6, 1.7, 1.3], 5.0)),
        ("bus", prior(2, [2.95, 11.0, 3.5], 8.0)),
        ("car", prior(10, [1.95, 4.6, 1.7], 10.0)),
        ("motorcycle", prior(3, [0.8, 2.1, 1.5], 10.0)),
        ("pedestrian", prior(8, [0.67, 0.73, 1.77], 1.8)),
        ("trailer", prior(2, [2.9, 12.3, 3.9], 6.0)),
        ("truck", prior(4, [2.5, 6.9, 2.8], 8.0)),
    ]
    .into_iter()
    .map(|(c, p)| (c.to_string(), p))
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Noise3D {
    pub pos_sigma_m: f64,
    pub size_sigma_frac: f64,
    pub yaw_sigma_rad: f64,
    pub velocity_sigma_mps: f64,
    pub fp_rate_per_frame: f64,
    pub fn_prob: f64,
    /// `s0` in the score model.
    pub score_scale_m: f64,
    pub score_noise_sigma: f64,
    pub fp_score_max: f64,
}

impl Default for Noise3D {
    fn default() -> Self {
        Noise3D {
            pos_sigma_m: 0.15,
            size_sigma_frac: 0.05,
            yaw_sigma_rad: 0.05,
            velocity_sigma_mps: 0.3,
            fp_rate_per_frame: 3.0,
            fn_prob: 0.1,
            score_scale_m: 1.0,
            score_noise_sigma: 0.05,
            fp_score_max: 0.5,
        }
    }
}

impl Noise3D {
    pub fn none() -> Self {
        Noise3D {
            pos_sigma_m: 0.0,
            size_sigma_frac: 0.0,
            yaw_sigma_rad: 0.0,
            velocity_sigma_mps: 0.0,
            fp_rate_per_frame: 0.0,
            fn_prob: 0.0,
            score_noise_sigma: 0.0,
            ..Noise3D::default()
        }
    }
}

/// Row `c` gives relative weights of the wrong labels for true class `c`.
/// Missing or all-zero rows fall back to uniform over the other classes.
pub type ConfusionMatrix = BTreeMap<String, BTreeMap<String, f64>>;

pub fn default_confusion() -> ConfusionMatrix {
    let rows: [(&str, &[(&str, f64)]); 7] = [
        ("bicycle", &[("motorcycle", 0.7), ("pedestrian", 0.3)]),
        ("bus", &[("truck", 0.6), ("trailer", 0.2), ("car", 0.2)]),
        ("car", &[("truck", 0.6), ("bus", 0.2), ("trailer", 0.2)]),
        ("motorcycle", &[("bicycle", 0.8), ("pedestrian", 0.2)]),
        ("pedestrian", &[("bicycle", 0.6), ("motorcycle", 0.4)]),
        ("trailer", &[("truck", 0.6), ("bus", 0.4)]),
        ("truck", &[("car", 0.4), ("bus", 0.3), ("trailer", 0.3)]),
    ];
    rows.iter()
        .map(|(c, r)| (c.to_string(), r.iter().map(|(k, v)| (k.to_string(), *v)).collect()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Noise2D {
    pub miss_prob: f64,
    pub mislabel_prob: f64,
    /// Overrides `mislabel_prob` for `novel_classes` when set.
    pub novel_mislabel_prob: Option<f64>,
    pub novel_classes: Vec<String>,
    /// `d_ref`; `None` makes mislabeling independent of range.
    pub mislabel_ref_distance_m: Option<f64>,
    /// `γ` in `p_eff = min(1, p·(d/d_ref)^γ)`: near labels are reliable,
    /// far ones mostly wrong for large `p`.
    pub mislabel_range_exponent: f64,
    pub confusion: ConfusionMatrix,
    pub jitter_px: f64,
    pub score_mean: f64,
    pub score_sigma: f64,
    /// Subtracted from the score mean of mislabeled boxes.
    pub mislabel_score_penalty: f64,
}

impl Default for Noise2D {
    fn default() -> Self {
        Noise2D {
            miss_prob: 0.1,
            mislabel_prob: 0.05,
            novel_mislabel_prob: Some(0.2),
            novel_classes: vec!["bicycle".into(), "bus".into(), "pedestrian".into()],
            mislabel_ref_distance_m: Some(25.0),
            mislabel_range_exponent: 1.75,
            confusion: default_confusion(),
            jitter_px: 3.0,
            score_mean: 0.6,
            score_sigma: 0.15,
            mislabel_score_penalty: 0.2,
        }
    }
}

impl Noise2D {
    pub fn none() -> Self {
        Noise2D {
            miss_prob: 0.0,
            mislabel_prob: 0.0,
            novel_mislabel_prob: None,
            jitter_px: 0.0,
            score_sigma: 0.0,
            ..Noise2D::default()
        }
    }

    fn mislabel_rate(&self, class: &str) -> f64 {
        match self.novel_mislabel_prob {
            Some(p) if self.novel_classes.iter().any(|c| c == class) => p,
            _ => self.mislabel_prob,
        }
    }

    /// Mislabel probability for an object of `class` at `range_m` from the ego.
    pub fn effective_mislabel_rate(&self, class: &str, range_m: f64) -> f64 {
        let p = self.mislabel_rate(class);
        match self.mislabel_ref_distance_m {
            Some(d_ref) => (p * (range_m / d_ref).powf(self.mislabel_range_exponent)).min(1.0),
            None => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub n_cameras: usize,
    pub yaw_spacing_deg: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub focal_px: f64,
    pub mount_height_m: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        CameraRig {
            n_cameras: 6,
            yaw_spacing_deg: 60.0,
            image_width: 1600,
            image_height: 900,
            focal_px: 1266.0,
            mount_height_m: 1.5,
        }
    }
}

impl CameraRig {
    /// Camera `i` looks along world yaw `i * spacing`, level, at the origin.
    pub fn calibrations(&self) -> Result<BTreeMap<String, CameraCalib>> {
        (0..self.n_cameras)
            .map(|i| {
                let (s, c) = (i as f64 * self.yaw_spacing_deg).to_radians().sin_cos();
                let id = format!("cam{i}");
                let calib = CameraCalib::new(
                    &id,
                    [
                        self.focal_px,
                        self.focal_px,
                        f64::from(self.image_width) / 2.0,
                        f64::from(self.image_height) / 2.0,
                    ],
                    [[s, -c, 0.0], [0.0, 0.0, -1.0], [c, s, 0.0]],
                    [0.0, self.mount_height_m, 0.0],
                    self.image_width,
                    self.image_height,
                )?;
                Ok((id, calib))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub n_frames: u32,
    pub frame_period_s: f64,
    /// Objects count as ground truth while `|x|, |y| <= world_extent_m`.
    pub world_extent_m: f64,
    /// Per-frame standard deviation of the heading change.
    pub heading_noise_rad: f64,
    pub classes: BTreeMap<String, ClassPrior>,
    pub noise_3d: Noise3D,
    pub noise_2d: Noise2D,
    pub rig: CameraRig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            n_frames: 40,
            frame_period_s: 0.5,
            world_extent_m: 50.0,
            heading_noise_rad: 0.02,
            classes: default_class_priors(),
            noise_3d: Noise3D::default(),
            noise_2d: Noise2D::default(),
            rig: CameraRig::default(),
        }
    }
}

fn check_prob(key: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::config(key, format!("probability {p} outside [0, 1]")))
    }
}

fn check_nonneg(key: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be finite and >= 0, got {v}")))
    }
}

impl SimConfig {
    /// Default scene with every noise source switched off.
    pub fn noiseless(seed: u64) -> Self {
        SimConfig {
            seed,
            heading_noise_rad: 0.0,
            noise_3d: Noise3D::none(),
            noise_2d: Noise2D::none(),
            ..SimConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames < 1 {
            return Err(Error::config("n_frames", "must be at least 1"));
        }
        if !(self.frame_period_s > 0.0 && self.frame_period_s.is_finite()) {
            return Err(Error::config("frame_period_s", "must be positive"));
        }
        if !(self.world_extent_m > 0.0 && self.world_extent_m.is_finite()) {
            return Err(Error::config("world_extent_m", "must be positive"));
        }
        check_nonneg("heading_noise_rad", self.heading_noise_rad)?;
        for (name, p) in &self.classes {
            if !crate::is_known_class(name) {
                return Err(Error::config("classes", format!("unknown class `{name}`")));
            }
            if p.size_mean_m.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::config("classes", format!("{name}: sizes must be positive")));
            }
            check_nonneg("size_sigma_frac", p.size_sigma_frac)?;
            let [lo, hi] = p.speed_range_mps;
            if !(0.0 <= lo && lo <= hi && hi.is_finite()) {
                return Err(Error::config("speed_range_mps", format!("{name}: bad range [{lo}, {hi}]")));
            }
        }
        let n3 = &self.noise_3d;
        check_nonneg("pos_sigma_m", n3.pos_sigma_m)?;
        check_nonneg("size_sigma_frac", n3.size_sigma_frac)?;
        check_nonneg("yaw_sigma_rad", n3.yaw_sigma_rad)?;
        check_nonneg("velocity_sigma_mps", n3.velocity_sigma_mps)?;
        check_nonneg("fp_rate_per_frame", n3.fp_rate_per_frame)?;
        check_prob("fn_prob", n3.fn_prob)?;
        if n3.score_scale_m.is_nan() || n3.score_scale_m <= 0.0 {
            return Err(Error::config("score_scale_m", "must be positive"));
        }
        check_nonneg("score_noise_sigma", n3.score_noise_sigma)?;
        check_prob("fp_score_max", n3.fp_score_max)?;
        let n2 = &self.noise_2d;
        check_prob("miss_prob", n2.miss_prob)?;
        check_prob("mislabel_prob", n2.mislabel_prob)?;
        if let Some(p) = n2.novel_mislabel_prob {
            check_prob("novel_mislabel_prob", p)?;
        }
        if let Some(d) = n2.mislabel_ref_distance_m {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::config("mislabel_ref_distance_m", "must be positive"));
            }
        }
        check_nonneg("mislabel_range_exponent", n2.mislabel_range_exponent)?;
        for (row, weights) in &n2.confusion {
            if weights.values().any(|w| !(*w >= 0.0 && w.is_finite())) {
                return Err(Error::config("confusion", format!("row `{row}` has a negative weight")));
            }
        }
        check_nonneg("jitter_px", n2.jitter_px)?;
        check_prob("score_mean", n2.score_mean)?;
        check_nonneg("score_sigma", n2.score_sigma)?;
        check_nonneg("mislabel_score_penalty", n2.mislabel_score_penalty)?;
        if self.rig.n_cameras == 0 || self.rig.image_width == 0 || self.rig.image_height == 0 {
            return Err(Error::config("rig", "needs at least one camera and a non-empty image"));
        }
        if self.rig.focal_px.is_nan() || self.rig.focal_px <= 0.0 {
            return Err(Error::config("focal_px", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtObject {
    pub track_id: TrackId,
    pub class_name: String,
    pub bbox: Box3D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtFrame {
    pub frame_index: u32,
    pub objects: Vec<GtObject>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub frames: Vec<GtFrame>,
    pub calibs: BTreeMap<String, CameraCalib>,
    pub detections_3d: Vec<Vec<Detection3D>>,
    pub detections_2d: Vec<Vec<Detection2D>>,
}

const GT_STREAM: u64 = 1;
const DET3D_STREAM: u64 = 2;
const DET2D_STREAM: u64 = 3;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated non-negative")
}

struct Mover {
    class_name: String,
    size: [f64; 3],
    pos: [f64; 2],
    vel: [f64; 2],
    yaw: f64,
    entered: bool,
    gone: bool,
}

/// Ground-truth trajectories. Positions advance by the current velocity, then
/// the velocity turns by a small random angle, so a constant-velocity
/// prediction from exact state is exact one frame ahead.
pub fn generate_ground_truth(config: &SimConfig) -> Result<Vec<GtFrame>> {
    config.validate()?;
    let mut rng = rng_for(config.seed, GT_STREAM);
    let spawn = 1.3 * config.world_extent_m;
    let heading = normal(config.heading_noise_rad);
    let mut movers = Vec::new();
    for class in CLASSES {
        let Some(p) = config.classes.get(class) else { continue };
        let size_noise = normal(p.size_sigma_frac);
        for _ in 0..p.count {
            let size = p.size_mean_m.map(|m| m * (1.0 + size_noise.sample(&mut rng)).max(0.5));
            let pos = [rng.random_range(-spawn..=spawn), rng.random_range(-spawn..=spawn)];
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let [lo, hi] = p.speed_range_mps;
            let speed = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            movers.push(Mover {
                class_name: class.to_string(),
                size,
                pos,
                vel: [speed * yaw.cos(), speed * yaw.sin()],
                yaw,
                entered: false,
                gone: false,
            });
        }
    }

    let e = config.world_extent_m;
    let dt = config.frame_period_s;
    let mut frames = Vec::with_capacity(config.n_frames as usize);
    for f in 0..config.n_frames {
        let mut objects = Vec::new();
        for (id, m) in movers.iter_mut().enumerate() {
            if m.gone {
                continue;
            }
            let inside = m.pos[0].abs() <= e && m.pos[1].abs() <= e;
            if inside {
                m.entered = true;
                objects.push(GtObject {
                    track_id: id as TrackId,
                    class_name: m.class_name.clone(),
                    bbox: Box3D::new([m.pos[0], m.pos[1], m.size[2] / 2.0], m.size, m.yaw, m.vel)?,
                });
            } else if m.entered {
                m.gone = true;
                continue;
            }
            m.pos = [m.pos[0] + m.vel[0] * dt, m.pos[1] + m.vel[1] * dt];
            let turn = heading.sample(&mut rng);
            if turn != 0.0 {
                let (s, c) = turn.sin_cos();
                m.vel = [c * m.vel[0] - s * m.vel[1], s * m.vel[0] + c * m.vel[1]];
                m.yaw = normalize_angle(m.yaw + turn);
            }
        }
        frames.push(GtFrame { frame_index: f, objects });
    }
    Ok(frames)
}

fn random_fp_box(config: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Box3D> {
    let names: Vec<&String> = config.classes.keys().collect();
    let (size, max_speed) = if names.is_empty() {
        ([1.95, 4.6, 1.7], 0.0)
    } else {
        let p = &config.classes[names[rng.random_range(0..names.len())]];
        (p.size_mean_m, p.speed_range_mps[1])
    };
    let e = config.world_extent_m;
    let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let speed = rng.random_range(0.0..=max_speed);
    Box3D::new(
        [rng.random_range(-e..=e), rng.random_range(-e..=e), size[2] / 2.0],
        size,
        yaw,
        [speed * yaw.cos(), speed * yaw.sin()],
    )
}

/// Noisy 3D proposals, one list per frame. True positives come first in
/// ground-truth order, then false positives; ids count up from 0 per frame.
pub fn corrupt_3d(frames: &[GtFrame], config: &SimConfig) -> Result<Vec<Vec<Detection3D>>> {
    config.validate()?;
    let n = &config.noise_3d;
    let mut rng = rng_for(config.seed, DET3D_STREAM);
    let pos = normal(n.pos_sigma_m);
    let size = normal(n.size_sigma_frac);
    let yaw = normal(n.yaw_sigma_rad);
    let vel = normal(n.velocity_sigma_mps);
    let eps = normal(n.score_noise_sigma);
    let fp_count = (n.fp_rate_per_frame > 0.0)
        .then(|| Poisson::new(n.fp_rate_per_frame).expect("rate validated positive"));
    let class_names: Vec<&String> = config.classes.keys().collect();

    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let mut dets = Vec::new();
        for obj in &frame.objects {
            if rng.random::<f64>() < n.fn_prob {
                continue;
            }
            let b = &obj.bbox;
            let c = b.center();
            let d = [pos.sample(&mut rng), pos.sample(&mut rng), pos.sample(&mut rng)];
            let s = b.size().map(|v| v * (1.0 + size.sample(&mut rng)).max(0.5));
            let [vx, vy] = b.velocity();
            let noisy = Box3D::new(
                [c[0] + d[0], c[1] + d[1], c[2] + d[2]],
                s,
                b.yaw() + yaw.sample(&mut rng),
                [vx + vel.sample(&mut rng), vy + vel.sample(&mut rng)],
            )?;
            let err = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let score = (1.0 - err / n.score_scale_m + eps.sample(&mut rng)).clamp(0.0, 1.0);
            dets.push(Detection3D::new(
                dets.len() as u64,
                frame.frame_index,
                noisy,
                Some(score),
                Some(obj.class_name.clone()),
            )?);
        }
        let n_fp = fp_count.map_or(0, |p| p.sample(&mut rng) as usize);
        for _ in 0..n_fp {
            let b = random_fp_box(config, &mut rng)?;
            let score = rng.random_range(0.0..=n.fp_score_max);
            let class = (!class_names.is_empty()).then(|| class_names[rng.random_range(0..class_names.len())].clone());
            dets.push(Detection3D::new(dets.len() as u64, frame.frame_index, b, Some(score), class)?);
        }
        out.push(dets);
    }
    Ok(out)
}

fn wrong_label(true_class: &str, confusion: &ConfusionMatrix, rng: &mut ChaCha8Rng) -> String {
    let row: Vec<(&str, f64)> = confusion
        .get(true_class)
        .map(|r| {
            r.iter()
                .filter(|(c, w)| c.as_str() != true_class && **w > 0.0)
                .map(|(c, w)| (c.as_str(), *w))
                .collect()
        })
        .unwrap_or_default();
    let row = if row.is_empty() {
        CLASSES.iter().filter(|c| **c != true_class).map(|c| (*c, 1.0)).collect()
    } else {
        row
    };
    let total: f64 = row.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for (c, w) in &row {
        if u < *w {
            return c.to_string();
        }
        u -= w;
    }
    row.last().expect("row is non-empty").0.to_string()
}

fn jittered(b: &Box2D, sigma: f64, w: f64, h: f64, rng: &mut ChaCha8Rng) -> Option<Box2D> {
    if sigma == 0.0 {
        return Some(*b);
    }
    let n = normal(sigma);
    let xs = [b.x1() + n.sample(rng), b.x2() + n.sample(rng)];
    let ys = [b.y1() + n.sample(rng), b.y2() + n.sample(rng)];
    let raw = Box2D::new(xs[0].min(xs[1]), ys[0].min(ys[1]), xs[0].max(xs[1]), ys[0].max(ys[1])).ok()?;
    raw.clipped_to(w, h).filter(|c| c.width() >= 1.0 && c.height() >= 1.0)
}

/// 2D detections per frame: every ground-truth box projected into every
/// camera that sees it, then dropped, relabeled, jittered and scored.
pub fn corrupt_2d(
    frames: &[GtFrame],
    calibs: &BTreeMap<String, CameraCalib>,
    config: &SimConfig,
) -> Result<Vec<Vec<Detection2D>>> {
    config.validate()?;
    let n = &config.noise_2d;
    let mut rng = rng_for(config.seed, DET2D_STREAM);
    let score_noise = normal(n.score_sigma);
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let mut dets = Vec::new();
        for (camera_id, calib) in calibs {
            let (w, h) = (calib.image_width(), calib.image_height());
            for obj in &frame.objects {
                let Some(proj) = project_box_to_image(&obj.bbox, calib) else {
                    continue;
                };
                if rng.random::<f64>() < n.miss_prob {
                    continue;
                }
                let [x, y, _] = obj.bbox.center();
                let p_eff = n.effective_mislabel_rate(&obj.class_name, x.hypot(y));
                let mislabeled = rng.random::<f64>() < p_eff;
                let class_name = if mislabeled {
                    wrong_label(&obj.class_name, &n.confusion, &mut rng)
                } else {
                    obj.class_name.clone()
                };
                let Some(bbox) = jittered(&proj, n.jitter_px, w, h, &mut rng) else {
                    continue;
                };
                let mean = n.score_mean - if mislabeled { n.mislabel_score_penalty } else { 0.0 };
                let score = (mean + score_noise.sample(&mut rng)).clamp(DEFAULT_SCORE_FLOOR, 1.0);
                dets.push(Detection2D {
                    camera_id: camera_id.clone(),
                    frame_index: frame.frame_index,
                    bbox,
                    class_name,
                    score,
                });
            }
        }
        out.push(dets);
    }
    Ok(out)
}

pub fn generate_scene(name: &str, config: &SimConfig) -> Result<Scene> {
    let frames = generate_ground_truth(config)?;
    let calibs = config.rig.calibrations()?;
    let detections_3d = corrupt_3d(&frames, config)?;
    let detections_2d = corrupt_2d(&frames, &calibs, config)?;
    Ok(Scene {
        name: name.to_string(),
        frames,
        calibs,
        detections_3d,
        detections_2d,
    })
}
