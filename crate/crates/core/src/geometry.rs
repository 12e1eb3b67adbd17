//! Pinhole camera, world-to-camera poses and pose-error metrics.
//!
//! Pixel coordinates place the center of pixel `(i, j)` at `(j, i)`: `u` runs
//! along columns, `v` along rows.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

/// Points closer than this to the camera plane are treated as behind it.
pub const Z_MIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    Intrinsics(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.fx.is_finite()
            && self.fy.is_finite()
            && (0.0..self.width as f64).contains(&self.cx)
            && (0.0..self.height as f64).contains(&self.cy);
        if ok {
            Ok(())
        } else {
            Err(GeometryError::Intrinsics(format!("{self}")))
        }
    }

    /// Intrinsics after resizing the image to `width x height`: `fx, cx` scale
    /// by the width ratio and `fy, cy` by the height ratio.
    pub fn resized(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Normalized image-plane coordinates of a pixel.
    pub fn normalize(&self, px: &Vec2) -> Vec2 {
        Vec2::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy)
    }

    pub fn contains(&self, px: &Vec2) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x < self.width as f64 && px.y < self.height as f64
    }
}

/// One-line sidecar format: `fx fy cx cy width height`.
impl fmt::Display for CameraIntrinsics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {} {} {}", self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }
}

impl FromStr for CameraIntrinsics {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tok: Vec<&str> = s.split_whitespace().collect();
        if tok.len() != 6 {
            return Err(GeometryError::Parse(format!("expected 6 intrinsics fields, got {}", tok.len())));
        }
        let f = |i: usize| tok[i].parse::<f64>().map_err(|e| GeometryError::Parse(format!("{}: {e}", tok[i])));
        let u = |i: usize| tok[i].parse::<usize>().map_err(|e| GeometryError::Parse(format!("{}: {e}", tok[i])));
        Self::new(f(0)?, f(1)?, f(2)?, f(3)?, u(4)?, u(5)?)
    }
}

/// World-to-camera rigid transform: `x_cam = R * x_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    /// From an unnormalized `(w, x, y, z)` quaternion.
    pub fn from_wxyz(q: [f64; 4], t: [f64; 3]) -> Self {
        Self {
            rotation: UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3])),
            translation: Vec3::from(t),
        }
    }

    pub fn from_matrix(r: &Matrix3<f64>, t: Vec3) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*r);
        Self {
            rotation: UnitQuaternion::from_rotation_matrix(&rot),
            translation: t,
        }
    }

    /// Camera placed at `eye` looking at `target`, with image `v` axis pointing
    /// roughly along `-up`.
    pub fn look_at(eye: &Vec3, target: &Vec3, up: &Vec3) -> Self {
        let z = (target - eye).normalize();
        let mut x = z.cross(up);
        if x.norm() < 1e-9 {
            x = z.cross(&Vec3::new(1.0, 0.0, 0.0));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Self::from_matrix(&r, -(r * eye))
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn transform(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    /// Camera center in world coordinates, `-Rᵀ t`.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.inverse() * self.translation)
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn to_line(&self) -> String {
        let q = self.wxyz();
        let t = self.translation;
        format!("{} {} {} {} {} {} {}", q[0], q[1], q[2], q[3], t.x, t.y, t.z)
    }

    /// Parses `qw qx qy qz tx ty tz`.
    pub fn parse_line(line: &str) -> Result<Pose, GeometryError> {
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| GeometryError::Parse(format!("{s}: {e}"))))
            .collect::<Result<_, _>>()?;
        if v.len() != 7 {
            return Err(GeometryError::Parse(format!("pose line needs 7 numbers, got {}", v.len())));
        }
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(GeometryError::Parse("zero or non-finite quaternion".into()));
        }
        Ok(Pose::from_wxyz([v[0], v[1], v[2], v[3]], [v[4], v[5], v[6]]))
    }
}

/// Parses a pose file: one pose per non-empty, non-`#` line.
pub fn parse_poses(text: &str) -> Result<Vec<Pose>, GeometryError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(Pose::parse_line)
        .collect()
}

pub fn format_poses(poses: &[Pose]) -> String {
    poses.iter().map(|p| p.to_line() + "\n").collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub pixel: Vec2,
    pub depth: f64,
}

/// Pinhole projection; `None` when the point is behind the camera (`z <= Z_MIN`).
pub fn project(point: &Vec3, pose: &Pose, k: &CameraIntrinsics) -> Option<Projected> {
    let c = pose.transform(point);
    if c.z <= Z_MIN {
        return None;
    }
    Some(Projected {
        pixel: Vec2::new(k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy),
        depth: c.z,
    })
}

pub fn backproject(pixel: &Vec2, depth: f64, pose: &Pose, k: &CameraIntrinsics) -> Result<Vec3, GeometryError> {
    if !(depth > 0.0) {
        return Err(GeometryError::Argument(format!("depth must be positive, got {depth}")));
    }
    let n = k.normalize(pixel);
    let cam = Vec3::new(n.x * depth, n.y * depth, depth);
    Ok(pose.rotation.inverse() * (cam - pose.translation))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct PoseError {
    /// Distance between camera centers, scene units.
    pub translation: f64,
    /// Angle of the relative rotation, degrees.
    pub rotation_deg: f64,
}

pub fn pose_error(est: &Pose, gt: &Pose) -> PoseError {
    let translation = (est.center() - gt.center()).norm();
    let rel = est.rotation_matrix() * gt.rotation_matrix().transpose();
    let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    PoseError {
        translation,
        rotation_deg: c.acos().to_degrees(),
    }
}

/// Fraction of entries with translation `<= t_thresh` and rotation `<= r_thresh_deg`.
pub fn recall(errors: &[PoseError], t_thresh: f64, r_thresh_deg: f64) -> Result<f64, GeometryError> {
    if errors.is_empty() {
        return Err(GeometryError::Argument("recall of an empty error list".into()));
    }
    let hits = errors
        .iter()
        .filter(|e| e.translation <= t_thresh && e.rotation_deg <= r_thresh_deg)
        .count();
    Ok(hits as f64 / errors.len() as f64)
}

/// Lower median: element `(n-1)/2` of the sorted values.
pub fn lower_median(values: &[f64]) -> Result<f64, GeometryError> {
    if values.is_empty() {
        return Err(GeometryError::Argument("median of an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v[(v.len() - 1) / 2])
}

/// Component-wise lower medians `(translation, rotation_deg)`.
pub fn median_errors(errors: &[PoseError]) -> Result<(f64, f64), GeometryError> {
    let t: Vec<f64> = errors.iter().map(|e| e.translation).collect();
    let r: Vec<f64> = errors.iter().map(|e| e.rotation_deg).collect();
    Ok((lower_median(&t)?, lower_median(&r)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 480.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn random_pose(rng: &mut impl Rng) -> Pose {
        let q = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        Pose::from_wxyz(q, [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(2.0..4.0)])
    }

    /// Homogeneous 4x4 chain `K4 * [R|t]` evaluated explicitly.
    fn matrix_oracle(x: &Vec3, pose: &Pose, k: &CameraIntrinsics) -> (Vec2, f64) {
        let r = pose.rotation_matrix();
        let mut rt = Matrix4::identity();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        rt.fixed_view_mut::<3, 1>(0, 3).copy_from(&pose.translation);
        let mut k4 = Matrix4::identity();
        k4.fixed_view_mut::<3, 3>(0, 0).copy_from(&k.matrix());
        let h = k4 * rt * nalgebra::Vector4::new(x.x, x.y, x.z, 1.0);
        (Vec2::new(h.x / h.z, h.y / h.z), h.z)
    }

    #[test]
    fn axis_point_projects_to_principal_point() {
        let p = project(&Vec3::new(0.0, 0.0, 2.0), &Pose::identity(), &k()).unwrap();
        assert_eq!(p.pixel, Vec2::new(320.0, 240.0));
        assert_eq!(p.depth, 2.0);
    }

    #[test]
    fn behind_camera_is_signalled() {
        assert!(project(&Vec3::new(0.0, 0.0, -1.0), &Pose::identity(), &k()).is_none());
        assert!(project(&Vec3::new(0.0, 0.0, 0.0), &Pose::identity(), &k()).is_none());
    }

    #[test]
    fn projection_matches_matrix_chain() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let pose = random_pose(&mut rng);
            let x = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let p = project(&x, &pose, &k()).unwrap();
            let (px, d) = matrix_oracle(&x, &pose, &k());
            assert!((p.pixel - px).norm() < 1e-9);
            assert!((p.depth - d).abs() < 1e-12);
        }
    }

    #[test]
    fn backproject_axis_and_errors() {
        let x = backproject(&Vec2::new(320.0, 240.0), 2.0, &Pose::identity(), &k()).unwrap();
        assert!((x - Vec3::new(0.0, 0.0, 2.0)).norm() < 1e-15);
        assert!(backproject(&Vec2::new(1.0, 1.0), 0.0, &Pose::identity(), &k()).is_err());
        assert!(backproject(&Vec2::new(1.0, 1.0), -2.0, &Pose::identity(), &k()).is_err());
    }

    #[test]
    fn backproject_fixed_case_against_oracle() {
        let pose = Pose::from_wxyz([0.9, 0.1, -0.2, 0.3], [0.1, -0.2, 3.0]);
        let x = backproject(&Vec2::new(100.0, 50.0), 2.5, &pose, &k()).unwrap();
        let (px, d) = matrix_oracle(&x, &pose, &k());
        assert!((px - Vec2::new(100.0, 50.0)).norm() < 1e-9);
        assert!((d - 2.5).abs() < 1e-12);
    }

    #[test]
    fn round_trip_on_random_pixels() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let pose = random_pose(&mut rng);
            let px = Vec2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0));
            let d = rng.gen_range(0.1..20.0);
            let x = backproject(&px, d, &pose, &k()).unwrap();
            let p = project(&x, &pose, &k()).unwrap();
            worst = worst.max((p.pixel - px).norm()).max((p.depth - d).abs());
        }
        assert!(worst < 1e-9, "worst {worst}");
    }

    #[test]
    fn pose_error_identity_and_antipodal() {
        let gt = Pose::from_wxyz([0.8, 0.2, 0.1, -0.3], [0.5, 0.1, 2.0]);
        let e = pose_error(&gt, &gt);
        assert!(e.translation < 1e-12 && e.rotation_deg < 1e-5);
        // rotate 180° about the camera z axis while keeping the center
        let rz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::PI);
        let rot = rz * gt.rotation;
        let est = Pose::new(rot, -(rot * gt.center()));
        let e = pose_error(&est, &gt);
        assert!(e.translation < 1e-12);
        // arccos near -1 resolves the angle to ~sqrt(eps)
        assert!((e.rotation_deg - 180.0).abs() < 1e-6);
    }

    #[test]
    fn rotation_error_matches_quaternion_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let (qa, qb) = (a.wxyz(), b.wxyz());
            let dot: f64 = qa.iter().zip(&qb).map(|(x, y)| x * y).sum::<f64>().abs().min(1.0);
            let oracle = (2.0 * dot.acos()).to_degrees();
            let e = pose_error(&a, &b).rotation_deg;
            assert!((e - oracle).abs() < 1e-6, "{e} vs {oracle}");
            assert!((e - pose_error(&b, &a).rotation_deg).abs() < 1e-9);
        }
    }

    #[test]
    fn recall_cases() {
        let z = PoseError::default();
        assert_eq!(recall(&[z, z], 0.05, 5.0).unwrap(), 1.0);
        let far = PoseError { translation: 1.0, rotation_deg: 90.0 };
        assert_eq!(recall(&[far, far], 0.05, 5.0).unwrap(), 0.0);
        let e = |t, r| PoseError { translation: t, rotation_deg: r };
        let r = recall(&[e(0.04, 4.0), e(0.06, 4.0), e(0.04, 6.0)], 0.05, 5.0).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-15);
        assert!(recall(&[], 0.05, 5.0).is_err());
    }

    #[test]
    fn lower_median_cases() {
        assert_eq!(lower_median(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(lower_median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.0);
        assert!(lower_median(&[]).is_err());
        assert!(median_errors(&[]).is_err());
    }

    #[test]
    fn intrinsics_sidecar_round_trip_and_validation() {
        let k = k();
        assert_eq!(k.to_string().parse::<CameraIntrinsics>().unwrap(), k);
        assert!("1 1 1 1 1".parse::<CameraIntrinsics>().is_err());
        assert!(CameraIntrinsics::new(-1.0, 1.0, 0.0, 0.0, 2, 2).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 5.0, 0.0, 2, 2).is_err());
        let r = CameraIntrinsics::new(100.0, 100.0, 320.0, 120.0, 640, 240).unwrap().resized(480, 480);
        assert_eq!((r.fx, r.fy, r.cx, r.cy), (75.0, 200.0, 240.0, 240.0));
    }

    #[test]
    fn pose_lines_round_trip() {
        let p = Pose::from_wxyz([0.9, 0.1, -0.2, 0.3], [0.1, -0.2, 3.0]);
        let q = parse_poses(&format_poses(&[p, Pose::identity()])).unwrap();
        assert_eq!(q.len(), 2);
        assert!(pose_error(&p, &q[0]).translation < 1e-12);
        assert!(Pose::parse_line("1 0 0").is_err());
    }

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let eye = Vec3::new(2.0, 1.0, -1.0);
        let pose = Pose::look_at(&eye, &Vec3::zeros(), &Vec3::new(0.0, 0.0, 1.0));
        assert!((pose.center() - eye).norm() < 1e-12);
        let p = project(&Vec3::zeros(), &pose, &k()).unwrap();
        assert!((p.pixel - Vec2::new(320.0, 240.0)).norm() < 1e-9);
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (prop::array::uniform4(-1.0f64..1.0), prop::array::uniform3(-3.0f64..3.0))
            .prop_filter("nonzero quaternion", |(q, _)| q.iter().map(|x| x * x).sum::<f64>() > 1e-3)
            .prop_map(|(q, t)| Pose::from_wxyz(q, t))
    }

    proptest! {
        #[test]
        fn composition_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!(pose_error(&l, &r).translation < 1e-9);
            prop_assert!((l.translation - r.translation).norm() < 1e-9);
            prop_assert!(l.rotation.angle_to(&r.rotation) < 1e-9);
        }

        #[test]
        fn inverse_composes_to_identity(a in arb_pose()) {
            let id = a.inverse().compose(&a);
            prop_assert!(id.translation.norm() < 1e-9);
            prop_assert!(id.rotation.angle() < 1e-7);
            prop_assert!((a.rotation.norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn project_backproject_inverse(a in arb_pose(), u in 0.0f64..640.0, v in 0.0f64..480.0, d in 0.05f64..50.0) {
            let x = backproject(&Vec2::new(u, v), d, &a, &k()).unwrap();
            let p = project(&x, &a, &k()).unwrap();
            prop_assert!((p.pixel - Vec2::new(u, v)).norm() < 1e-9);
            prop_assert!((p.depth - d).abs() < 1e-9);
        }

        #[test]
        fn median_matches_sort_oracle(v in prop::collection::vec(-100.0f64..100.0, 1..40)) {
            let mut s = v.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assert_eq!(lower_median(&v).unwrap(), s[(s.len() - 1) / 2]);
        }
    }
}
