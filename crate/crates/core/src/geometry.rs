//! Rotated box geometry: BEV footprints, IoU in BEV/3D/image space and
//! projection of 3D boxes onto calibrated pinhole cameras.
//!
//! World frame is right-handed with z up; box `center.z` is the vertical
//! center of the box. In the box's local frame the footprint spans `w` along
//! local x and `l` along local y, rotated by `yaw` about z.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point2 = [f64; 2];

/// Wraps an angle into `[-pi, pi)`. Angles already in range are returned bit-for-bit.
pub fn normalize_angle(angle: f64) -> f64 {
    if (-PI..PI).contains(&angle) {
        return angle;
    }
    let wrapped = (angle + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped >= PI {
        -PI
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox3D")]
pub struct Box3D {
    center: [f64; 3],
    size: [f64; 3],
    yaw: f64,
    velocity: [f64; 2],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox3D {
    center: [f64; 3],
    size: [f64; 3],
    yaw: f64,
    velocity: [f64; 2],
}

impl TryFrom<RawBox3D> for Box3D {
    type Error = Error;

    fn try_from(raw: RawBox3D) -> Result<Self> {
        Box3D::new(raw.center, raw.size, raw.yaw, raw.velocity)
    }
}

impl Box3D {
    /// `size` is `(w, l, h)`; yaw is wrapped into `[-pi, pi)`.
    pub fn new(center: [f64; 3], size: [f64; 3], yaw: f64, velocity: [f64; 2]) -> Result<Self> {
        let finite = center
            .iter()
            .chain(size.iter())
            .chain(velocity.iter())
            .chain(std::iter::once(&yaw))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidBox3D("non-finite component".into()));
        }
        if size.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidBox3D(format!(
                "size must be strictly positive, got {size:?}"
            )));
        }
        Ok(Box3D {
            center,
            size,
            yaw: normalize_angle(yaw),
            velocity,
        })
    }

    pub fn center(&self) -> [f64; 3] {
        self.center
    }

    pub fn size(&self) -> [f64; 3] {
        self.size
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn velocity(&self) -> [f64; 2] {
        self.velocity
    }

    pub fn width(&self) -> f64 {
        self.size[0]
    }

    pub fn length(&self) -> f64 {
        self.size[1]
    }

    pub fn height(&self) -> f64 {
        self.size[2]
    }

    pub fn volume(&self) -> f64 {
        self.size[0] * self.size[1] * self.size[2]
    }

    pub fn footprint_area(&self) -> f64 {
        self.size[0] * self.size[1]
    }

    pub fn bottom(&self) -> f64 {
        self.center[2] - 0.5 * self.size[2]
    }

    pub fn top(&self) -> f64 {
        self.center[2] + 0.5 * self.size[2]
    }

    pub fn speed(&self) -> f64 {
        self.velocity[0].hypot(self.velocity[1])
    }

    /// Same box shifted in the ground plane.
    pub fn translated(&self, dx: f64, dy: f64) -> Box3D {
        Box3D {
            center: [self.center[0] + dx, self.center[1] + dy, self.center[2]],
            ..*self
        }
    }

    pub fn with_velocity(&self, velocity: [f64; 2]) -> Box3D {
        Box3D { velocity, ..*self }
    }

    /// Applies a rigid motion of the ground plane: rotation by `angle` about
    /// the world z axis, then translation by `(dx, dy)`.
    pub fn transformed(&self, angle: f64, dx: f64, dy: f64) -> Box3D {
        let (s, c) = angle.sin_cos();
        let [x, y, z] = self.center;
        let [vx, vy] = self.velocity;
        Box3D {
            center: [c * x - s * y + dx, s * x + c * y + dy, z],
            size: self.size,
            yaw: normalize_angle(self.yaw + angle),
            velocity: [c * vx - s * vy, s * vx + c * vy],
        }
    }

    /// Counter-clockwise footprint corners.
    pub fn bev_corners(&self) -> [Point2; 4] {
        let hw = 0.5 * self.size[0];
        let hl = 0.5 * self.size[1];
        let (s, c) = self.yaw.sin_cos();
        let [cx, cy, _] = self.center;
        [[-hw, -hl], [hw, -hl], [hw, hl], [-hw, hl]].map(|[x, y]| [cx + c * x - s * y, cy + s * x + c * y])
    }

    /// Bottom face corners followed by the top face corners.
    pub fn corners_3d(&self) -> [[f64; 3]; 8] {
        let bev = self.bev_corners();
        let (z0, z1) = (self.bottom(), self.top());
        let mut out = [[0.0; 3]; 8];
        for (i, [x, y]) in bev.into_iter().enumerate() {
            out[i] = [x, y, z0];
            out[i + 4] = [x, y, z1];
        }
        out
    }

    /// Whether a ground-plane point lies inside the footprint.
    pub fn contains_bev(&self, p: Point2) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let lx = c * dx + s * dy;
        let ly = -s * dx + c * dy;
        lx.abs() <= 0.5 * self.size[0] && ly.abs() <= 0.5 * self.size[1]
    }

    fn footprint_key(&self) -> [u64; 5] {
        [
            self.center[0].to_bits(),
            self.center[1].to_bits(),
            self.size[0].to_bits(),
            self.size[1].to_bits(),
            self.yaw.to_bits(),
        ]
    }

    fn circumradius_bev(&self) -> f64 {
        0.5 * self.size[0].hypot(self.size[1])
    }
}

/// Signed shoelace area; positive for counter-clockwise polygons.
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc
}

pub fn polygon_area(poly: &[Point2]) -> f64 {
    signed_area(poly).abs()
}

/// Positive when `p` is left of the directed edge `a -> b`.
fn edge_side(a: Point2, b: Point2, p: Point2) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Sutherland-Hodgman clip of `subject` against the convex `clip` polygon.
pub fn clip_convex_polygon(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut clip_ccw = clip.to_vec();
    if signed_area(&clip_ccw) < 0.0 {
        clip_ccw.reverse();
    }
    let mut output = subject.to_vec();
    let n = clip_ccw.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip_ccw[i];
        let b = clip_ccw[(i + 1) % n];
        let input = std::mem::take(&mut output);
        let mut prev = input[input.len() - 1];
        let mut prev_side = edge_side(a, b, prev);
        for &cur in &input {
            let cur_side = edge_side(a, b, cur);
            if cur_side >= 0.0 {
                if prev_side < 0.0 {
                    output.push(lerp_crossing(prev, cur, prev_side, cur_side));
                }
                output.push(cur);
            } else if prev_side >= 0.0 {
                output.push(lerp_crossing(prev, cur, prev_side, cur_side));
            }
            prev = cur;
            prev_side = cur_side;
        }
    }
    output
}

fn lerp_crossing(p: Point2, q: Point2, sp: f64, sq: f64) -> Point2 {
    let t = sp / (sp - sq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Area of the intersection of two convex polygons; 0 when disjoint.
pub fn convex_polygon_intersection_area(a: &[Point2], b: &[Point2]) -> f64 {
    if a.len() < 3 || b.len() < 3 {
        return 0.0;
    }
    let clipped = clip_convex_polygon(a, b);
    if clipped.len() < 3 {
        return 0.0;
    }
    polygon_area(&clipped).min(polygon_area(a)).min(polygon_area(b))
}

fn ordered<'a>(a: &'a Box3D, b: &'a Box3D) -> (&'a Box3D, &'a Box3D) {
    if a.footprint_key() <= b.footprint_key() {
        (a, b)
    } else {
        (b, a)
    }
}

/// Footprint intersection area. Argument order does not affect the result.
pub fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    if bev_center_distance(a, b) > a.circumradius_bev() + b.circumradius_bev() {
        return 0.0;
    }
    let (a, b) = ordered(a, b);
    convex_polygon_intersection_area(&a.bev_corners(), &b.bev_corners())
}

pub fn iou_bev(a: &Box3D, b: &Box3D) -> f64 {
    if a.footprint_key() == b.footprint_key() {
        return 1.0;
    }
    let inter = bev_intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.footprint_area() + b.footprint_area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

pub fn vertical_overlap(a: &Box3D, b: &Box3D) -> f64 {
    (a.top().min(b.top()) - a.bottom().max(b.bottom())).max(0.0)
}

pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    if a.footprint_key() == b.footprint_key()
        && a.center[2] == b.center[2]
        && a.size[2] == b.size[2]
    {
        return 1.0;
    }
    let dz = vertical_overlap(a, b);
    if dz <= 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * dz;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

pub fn bev_center_distance(a: &Box3D, b: &Box3D) -> f64 {
    (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1])
}

/// Axis-aligned image box in pixels, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Box2D {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl TryFrom<[f64; 4]> for Box2D {
    type Error = Error;

    fn try_from([x1, y1, x2, y2]: [f64; 4]) -> Result<Self> {
        Box2D::new(x1, y1, x2, y2)
    }
}

impl From<Box2D> for [f64; 4] {
    fn from(b: Box2D) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl Box2D {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox2D("non-finite coordinate".into()));
        }
        if x1 > x2 || y1 > y2 {
            return Err(Error::InvalidBox2D(format!(
                "corners out of order: [{x1}, {y1}, {x2}, {y2}]"
            )));
        }
        Ok(Box2D { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point2 {
        [0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2)]
    }

    /// Intersection with `[0, width] x [0, height]`, or `None` if empty.
    pub fn clipped_to(&self, width: f64, height: f64) -> Option<Box2D> {
        let x1 = self.x1.clamp(0.0, width);
        let x2 = self.x2.clamp(0.0, width);
        let y1 = self.y1.clamp(0.0, height);
        let y2 = self.y2.clamp(0.0, height);
        if x2 - x1 <= 0.0 || y2 - y1 <= 0.0 {
            None
        } else {
            Some(Box2D { x1, y1, x2, y2 })
        }
    }

    pub fn is_within(&self, width: f64, height: f64) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= width && self.y2 <= height
    }
}

pub fn iou_2d(a: &Box2D, b: &Box2D) -> f64 {
    let iw = a.x2.min(b.x2) - a.x1.max(b.x1);
    let ih = a.y2.min(b.y2) - a.y1.max(b.y1);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Pinhole camera with zero skew and no distortion. The extrinsics map world
/// points into the camera frame (x right, y down, z forward).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCalib", into = "RawCalib")]
pub struct CameraCalib {
    camera_id: String,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    image_width: u32,
    image_height: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCalib {
    camera_id: String,
    intrinsics: [[f64; 3]; 3],
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    image_width: u32,
    image_height: u32,
}

impl TryFrom<RawCalib> for CameraCalib {
    type Error = Error;

    fn try_from(raw: RawCalib) -> Result<Self> {
        let k = raw.intrinsics;
        let bad = |reason: &str| Error::InvalidCalibration {
            camera: raw.camera_id.clone(),
            reason: reason.to_string(),
        };
        if k[0][1] != 0.0 || k[1][0] != 0.0 || k[2] != [0.0, 0.0, 1.0] {
            return Err(bad("intrinsics must be [[fx,0,cx],[0,fy,cy],[0,0,1]]"));
        }
        CameraCalib::new(
            raw.camera_id.clone(),
            [k[0][0], k[1][1], k[0][2], k[1][2]],
            raw.rotation,
            raw.translation,
            raw.image_width,
            raw.image_height,
        )
    }
}

impl From<CameraCalib> for RawCalib {
    fn from(c: CameraCalib) -> Self {
        let r = c.rotation;
        RawCalib {
            intrinsics: [[c.fx, 0.0, c.cx], [0.0, c.fy, c.cy], [0.0, 0.0, 1.0]],
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [c.translation.x, c.translation.y, c.translation.z],
            image_width: c.image_width,
            image_height: c.image_height,
            camera_id: c.camera_id,
        }
    }
}

impl CameraCalib {
    /// `intrinsics` is `[fx, fy, cx, cy]`; `rotation` is row-major.
    pub fn new(
        camera_id: impl Into<String>,
        intrinsics: [f64; 4],
        rotation: [[f64; 3]; 3],
        translation: [f64; 3],
        image_width: u32,
        image_height: u32,
    ) -> Result<Self> {
        let camera_id = camera_id.into();
        let bad = |reason: String| Error::InvalidCalibration {
            camera: camera_id.clone(),
            reason,
        };
        let [fx, fy, cx, cy] = intrinsics;
        if !intrinsics.iter().all(|v| v.is_finite()) || fx <= 0.0 || fy <= 0.0 {
            return Err(bad(format!("focal lengths must be positive and finite, got {intrinsics:?}")));
        }
        if image_width == 0 || image_height == 0 {
            return Err(bad("image dimensions must be positive".into()));
        }
        let rotation = Matrix3::from_row_slice(&rotation.concat());
        let translation = Vector3::from(translation);
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(bad("non-finite extrinsics".into()));
        }
        let residual = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if residual >= 1e-9 {
            return Err(bad(format!("rotation is not orthonormal (residual {residual:e})")));
        }
        if rotation.determinant() <= 0.0 {
            return Err(bad("rotation has negative determinant".into()));
        }
        Ok(CameraCalib {
            camera_id,
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            image_width,
            image_height,
        })
    }

    pub fn camera_id(&self) -> &str {
        &self.camera_id
    }

    pub fn intrinsic_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn image_width(&self) -> f64 {
        f64::from(self.image_width)
    }

    pub fn image_height(&self) -> f64 {
        f64::from(self.image_height)
    }

    pub fn world_to_camera(&self, p: [f64; 3]) -> Vector3<f64> {
        self.rotation * Vector3::from(p) + self.translation
    }

    /// Perspective projection of a camera-frame point with positive depth.
    pub fn project_camera_point(&self, p: &Vector3<f64>) -> Point2 {
        [self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy]
    }
}

pub const DEFAULT_MIN_VISIBLE_CORNERS: usize = 1;

pub fn project_box_to_image(b: &Box3D, calib: &CameraCalib) -> Option<Box2D> {
    project_box_to_image_with(b, calib, DEFAULT_MIN_VISIBLE_CORNERS)
}

/// Axis-aligned hull of the corners in front of the camera, clipped to the
/// image. Corners behind the camera are dropped, not clipped at the image plane.
pub fn project_box_to_image_with(
    b: &Box3D,
    calib: &CameraCalib,
    min_visible_corners: usize,
) -> Option<Box2D> {
    let mut visible = 0usize;
    let (mut x1, mut y1) = (f64::INFINITY, f64::INFINITY);
    let (mut x2, mut y2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for corner in b.corners_3d() {
        let pc = calib.world_to_camera(corner);
        if pc.z <= 0.0 {
            continue;
        }
        visible += 1;
        let [u, v] = calib.project_camera_point(&pc);
        x1 = x1.min(u);
        y1 = y1.min(v);
        x2 = x2.max(u);
        y2 = y2.max(v);
    }
    if visible == 0 || visible < min_visible_corners {
        return None;
    }
    if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
        return None;
    }
    Box2D { x1, y1, x2, y2 }.clipped_to(calib.image_width(), calib.image_height())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    fn bx(x: f64, y: f64, z: f64, w: f64, l: f64, h: f64, yaw: f64) -> Box3D {
        Box3D::new([x, y, z], [w, l, h], yaw, [0.0, 0.0]).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn sorted_points(mut pts: Vec<Point2>) -> Vec<Point2> {
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts
    }

    #[test]
    fn box_rejects_bad_input() {
        assert!(Box3D::new([0.0; 3], [0.0, 1.0, 1.0], 0.0, [0.0; 2]).is_err());
        assert!(Box3D::new([f64::NAN, 0.0, 0.0], [1.0; 3], 0.0, [0.0; 2]).is_err());
        assert!(Box3D::new([0.0; 3], [1.0; 3], f64::INFINITY, [0.0; 2]).is_err());
    }

    #[test]
    fn yaw_wraps_into_half_open_range() {
        assert_eq!(bx(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, PI).yaw(), -PI);
        assert!(close(bx(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 3.0 * PI / 2.0).yaw(), -PI / 2.0, 1e-12));
        assert_eq!(normalize_angle(0.1), 0.1);
    }

    #[test]
    fn unit_box_corners() {
        let b = bx(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        let c = b.bev_corners();
        assert_eq!(c, [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]]);
        assert!(signed_area(&c) > 0.0);

        let r = bx(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, PI / 2.0).bev_corners();
        let a = sorted_points(c.to_vec());
        let b = sorted_points(r.to_vec());
        for (p, q) in a.iter().zip(&b) {
            assert!(close(p[0], q[0], 1e-12) && close(p[1], q[1], 1e-12));
        }
    }

    #[test]
    fn rotated_rectangle_corners() {
        let b = bx(0.0, 0.0, 0.0, 2.0, 4.0, 1.0, FRAC_PI_4);
        let (s, c) = FRAC_PI_4.sin_cos();
        let expected: Vec<Point2> = [[-1.0, -2.0], [1.0, -2.0], [1.0, 2.0], [-1.0, 2.0]]
            .iter()
            .map(|[x, y]| [c * x - s * y, s * x + c * y])
            .collect();
        for (got, want) in b.bev_corners().iter().zip(&expected) {
            assert!(close(got[0], want[0], 1e-12) && close(got[1], want[1], 1e-12));
        }
        assert!(signed_area(&b.bev_corners()) > 0.0);
    }

    fn unit_square(cx: f64, cy: f64) -> Vec<Point2> {
        vec![[cx - 0.5, cy - 0.5], [cx + 0.5, cy - 0.5], [cx + 0.5, cy + 0.5], [cx - 0.5, cy + 0.5]]
    }

    #[test]
    fn intersection_of_squares() {
        assert!(close(convex_polygon_intersection_area(&unit_square(0.0, 0.0), &unit_square(0.0, 0.0)), 1.0, 1e-12));
        assert_eq!(convex_polygon_intersection_area(&unit_square(0.0, 0.0), &unit_square(2.0, 0.0)), 0.0);
    }

    #[test]
    fn clip_accepts_clockwise_clip_polygon() {
        let mut cw = unit_square(0.25, 0.0);
        cw.reverse();
        let area = convex_polygon_intersection_area(&unit_square(0.0, 0.0), &cw);
        assert!(close(area, 0.75, 1e-12));
    }

    /// Point-sampling estimate of the area of intersection of two convex polygons
    /// given by half-plane membership, over their joint bounding box.
    fn mc_intersection_area(a: &[Point2], b: &[Point2], samples: usize, seed: u64) -> f64 {
        let inside = |poly: &[Point2], p: Point2| {
            (0..poly.len()).all(|i| {
                let q0 = poly[i];
                let q1 = poly[(i + 1) % poly.len()];
                (q1[0] - q0[0]) * (p[1] - q0[1]) - (q1[1] - q0[1]) * (p[0] - q0[0]) >= 0.0
            })
        };
        let all: Vec<Point2> = a.iter().chain(b).copied().collect();
        let (xmin, xmax) = all.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p[0]), hi.max(p[0])));
        let (ymin, ymax) = all.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p[1]), hi.max(p[1])));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hits = (0..samples)
            .filter(|_| {
                let p = [rng.random_range(xmin..xmax), rng.random_range(ymin..ymax)];
                inside(a, p) && inside(b, p)
            })
            .count();
        hits as f64 / samples as f64 * (xmax - xmin) * (ymax - ymin)
    }

    #[test]
    fn square_against_rotated_copy_matches_sampling_oracle() {
        let square = bx(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).bev_corners();
        let rotated = bx(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, FRAC_PI_4).bev_corners();
        let oracle = mc_intersection_area(&square, &rotated, 10_000_000, 7);
        let closed_form = 2.0 * (2f64.sqrt() - 1.0);
        assert!(close(oracle, closed_form, 1e-3), "oracle {oracle}");
        let got = convex_polygon_intersection_area(&square, &rotated);
        assert!(close(got, oracle, 1e-3), "got {got}, oracle {oracle}");
        assert!(close(got, closed_form, 1e-12));
    }

    #[test]
    fn bev_iou_examples() {
        let a = bx(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        assert_eq!(iou_bev(&a, &a), 1.0);
        let b = bx(0.5, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        assert!(close(iou_bev(&a, &b), 1.0 / 3.0, 1e-12));
        let far = bx(5.0, 5.0, 0.0, 1.0, 1.0, 1.0, 0.3);
        assert_eq!(iou_bev(&a, &far), 0.0);
    }

    #[test]
    fn iou_3d_examples() {
        let a = bx(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        assert_eq!(iou_3d(&a, &a), 1.0);
        let stacked = bx(0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0);
        assert_eq!(iou_3d(&a, &stacked), 0.0);
        let shifted = bx(0.5, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        assert!(close(iou_3d(&a, &shifted), 1.0 / 3.0, 1e-12));
        // Half vertical overlap on identical footprints: 0.5 / 1.5.
        let half = bx(0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 0.0);
        assert!(close(iou_3d(&a, &half), 1.0 / 3.0, 1e-12));
    }

    #[test]
    fn center_distance() {
        let a = bx(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        let b = bx(3.0, 4.0, 9.0, 2.0, 1.0, 1.0, 1.0);
        assert_eq!(bev_center_distance(&a, &a), 0.0);
        assert_eq!(bev_center_distance(&a, &b), 5.0);
        let d = bev_center_distance(&a.transformed(0.7, 3.0, -2.0), &b.transformed(0.7, 3.0, -2.0));
        assert!(close(d, 5.0, 1e-12));
    }

    #[test]
    fn iou_2d_examples() {
        let a = Box2D::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let b = Box2D::new(5.0, 0.0, 15.0, 10.0).unwrap();
        let c = Box2D::new(20.0, 20.0, 30.0, 30.0).unwrap();
        assert_eq!(iou_2d(&a, &a), 1.0);
        assert_eq!(iou_2d(&a, &c), 0.0);
        assert!(close(iou_2d(&a, &b), 1.0 / 3.0, 1e-15));
        assert!(Box2D::new(1.0, 0.0, 0.0, 1.0).is_err());
    }

    fn identity_cam(fx: f64, cx: f64, cy: f64, w: u32, h: u32) -> CameraCalib {
        CameraCalib::new(
            "cam",
            [fx, fx, cx, cy],
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [0.0; 3],
            w,
            h,
        )
        .unwrap()
    }

    #[test]
    fn projection_examples() {
        let cam = identity_cam(500.0, 800.0, 450.0, 1600, 900);
        let behind = bx(0.0, 0.0, -10.0, 2.0, 2.0, 2.0, 0.0);
        assert!(project_box_to_image(&behind, &cam).is_none());

        // Corners at (+-1, +-1, 9) and (+-1, +-1, 11): the near face sets the extent.
        let ahead = bx(0.0, 0.0, 10.0, 2.0, 2.0, 2.0, 0.0);
        let p = project_box_to_image(&ahead, &cam).unwrap();
        let e = 500.0 / 9.0;
        assert!(close(p.x1(), 800.0 - e, 1e-9));
        assert!(close(p.x2(), 800.0 + e, 1e-9));
        assert!(close(p.y1(), 450.0 - e, 1e-9));
        assert!(close(p.y2(), 450.0 + e, 1e-9));
        assert!(close(p.center()[0], 800.0, 1e-9) && close(p.center()[1], 450.0, 1e-9));
    }

    #[test]
    fn projection_clips_to_image() {
        let cam = identity_cam(500.0, 800.0, 450.0, 1600, 900);
        let near_edge = bx(3.0, 0.0, 2.0, 2.0, 2.0, 2.0, 0.0);
        let p = project_box_to_image(&near_edge, &cam).unwrap();
        assert_eq!(p.x2(), 1600.0);
        assert!(p.is_within(1600.0, 900.0));
        let outside = bx(100.0, 0.0, 2.0, 1.0, 1.0, 1.0, 0.0);
        assert!(project_box_to_image(&outside, &cam).is_none());
        assert!(project_box_to_image_with(&near_edge, &cam, 9).is_none());
    }

    #[test]
    fn calibration_validation() {
        let bad_rot = CameraCalib::new(
            "c",
            [1.0, 1.0, 0.0, 0.0],
            [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [0.0; 3],
            10,
            10,
        );
        assert!(bad_rot.is_err());
        let reflection = CameraCalib::new(
            "c",
            [1.0, 1.0, 0.0, 0.0],
            [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [0.0; 3],
            10,
            10,
        );
        assert!(reflection.is_err());
        assert!(CameraCalib::new("c", [0.0, 1.0, 0.0, 0.0], [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], [0.0; 3], 10, 10).is_err());
    }

    #[test]
    fn calibration_json_round_trip() {
        let cam = identity_cam(1266.0, 800.0, 450.0, 1600, 900);
        let json = serde_json::to_string(&cam).unwrap();
        assert!(json.contains("\"intrinsics\":[[1266.0,0.0,800.0],[0.0,1266.0,450.0],[0.0,0.0,1.0]]"));
        let back: CameraCalib = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cam);
    }

    prop_compose! {
        fn arb_box()(x in -5.0..5.0f64, y in -5.0..5.0f64, z in -1.0..1.0f64,
                     w in 0.2..4.0f64, l in 0.2..6.0f64, h in 0.2..3.0f64,
                     yaw in -PI..PI) -> Box3D {
            bx(x, y, z, w, l, h, yaw)
        }
    }

    proptest! {
        #[test]
        fn ious_are_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let (ab, ba) = (iou_bev(&a, &b), iou_bev(&b, &a));
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            let (ab3, ba3) = (iou_3d(&a, &b), iou_3d(&b, &a));
            prop_assert_eq!(ab3, ba3);
            prop_assert!((0.0..=1.0).contains(&ab3));
            prop_assert_eq!(iou_bev(&a, &a), 1.0);
            prop_assert_eq!(iou_3d(&a, &a), 1.0);
        }

        #[test]
        fn ious_invariant_under_rigid_motion(a in arb_box(), b in arb_box(),
                                             angle in -PI..PI, dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
            let (ta, tb) = (a.transformed(angle, dx, dy), b.transformed(angle, dx, dy));
            prop_assert!((iou_bev(&a, &b) - iou_bev(&ta, &tb)).abs() < 1e-9);
            prop_assert!((iou_3d(&a, &b) - iou_3d(&ta, &tb)).abs() < 1e-9);
        }

        #[test]
        fn intersection_bounded_by_smaller_polygon(a in arb_box(), b in arb_box()) {
            let (pa, pb) = (a.bev_corners(), b.bev_corners());
            let inter = convex_polygon_intersection_area(&pa, &pb);
            prop_assert!(inter >= 0.0);
            prop_assert!(inter <= polygon_area(&pa).min(polygon_area(&pb)));
        }

        #[test]
        fn iou_2d_symmetric(x1 in 0.0..100.0f64, y1 in 0.0..100.0f64, w1 in 0.1..50.0f64, h1 in 0.1..50.0f64,
                            x2 in 0.0..100.0f64, y2 in 0.0..100.0f64, w2 in 0.1..50.0f64, h2 in 0.1..50.0f64) {
            let a = Box2D::new(x1, y1, x1 + w1, y1 + h1).unwrap();
            let b = Box2D::new(x2, y2, x2 + w2, y2 + h2).unwrap();
            prop_assert_eq!(iou_2d(&a, &b), iou_2d(&b, &a));
            prop_assert!((0.0..=1.0).contains(&iou_2d(&a, &b)));
            prop_assert_eq!(iou_2d(&a, &a), 1.0);
        }

        #[test]
        fn projection_stays_inside_image(b in arb_box(), yaw in -PI..PI) {
            let (s, c) = yaw.sin_cos();
            // Camera looking along the rotated world x axis from 1.5 m height.
            let rot = [[s, -c, 0.0], [0.0, 0.0, -1.0], [c, s, 0.0]];
            let cam = CameraCalib::new("c", [1266.0, 1266.0, 800.0, 450.0], rot, [0.0, 1.5, 0.0], 1600, 900).unwrap();
            if let Some(p) = project_box_to_image(&b.translated(8.0, 0.0), &cam) {
                prop_assert!(0.0 <= p.x1() && p.x1() <= p.x2() && p.x2() <= 1600.0);
                prop_assert!(0.0 <= p.y1() && p.y1() <= p.y2() && p.y2() <= 900.0);
            }
        }
    }
}
