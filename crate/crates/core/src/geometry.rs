//! Vectors, rotations, poses, rays and the pinhole camera.
//!
//! Rotations use the Z-Y-X composition `R = Rz(gamma) * Ry(beta) * Rx(alpha)`
//! with right-handed angles. Cameras look along their local +z axis, with
//! image x to the right and image y downward.

use core::f64::consts::PI;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::prelude::*;

/// A point or direction in millimeters.
pub type Vec3 = Vector3<f64>;
/// A pixel coordinate.
pub type Vec2 = Vector2<f64>;

/// `|R31|` above this is treated as gimbal lock by [`rotmat_to_euler`].
pub const GIMBAL_LOCK_THRESHOLD: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("point has non-positive depth {depth} in the camera frame")]
    BehindCamera { depth: f64 },
    #[error("matrix is not a proper rotation (orthonormality error {orthonormality}, det {det})")]
    NotARotation { orthonormality: f64, det: f64 },
    #[error("direction has zero length")]
    ZeroDirection,
}

/// Euler angles in radians, composed as `Rz(gamma) * Ry(beta) * Rx(alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EulerAngles {
    pub const fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    /// Wraps every angle into `(-pi, pi]`.
    pub fn wrapped(self) -> Self {
        Self::new(wrap_angle(self.alpha), wrap_angle(self.beta), wrap_angle(self.gamma))
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// A proper 3x3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotMat(Matrix3<f64>);

impl RotMat {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Accepts `m` if `m^T m = I` and `det m = +1`, both within `tol`.
    pub fn from_matrix(m: Matrix3<f64>, tol: f64) -> Result<Self, GeometryError> {
        let orthonormality = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if orthonormality > tol || (det - 1.0).abs() > tol {
            return Err(GeometryError::NotARotation { orthonormality, det });
        }
        Ok(Self(m))
    }

    /// Wraps a matrix the caller already knows is a rotation.
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Builds the rotation whose columns are the given frame axes, after
    /// Gram-Schmidt: `x` keeps its direction, `y` is made orthogonal to it and
    /// `z = x cross y`.
    pub fn from_axes(x: Vec3, y: Vec3) -> Result<Self, GeometryError> {
        let xn = x.try_normalize(1e-12).ok_or(GeometryError::ZeroDirection)?;
        let y_perp = y - xn * xn.dot(&y);
        let yn = y_perp.try_normalize(1e-12).ok_or(GeometryError::ZeroDirection)?;
        let zn = xn.cross(&yn);
        Ok(Self(Matrix3::from_columns(&[xn, yn, zn])))
    }

    /// Rotation by `angle` about the unit `axis` (Rodrigues).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let k = axis.normalize();
        let (s, c) = angle.sin_cos();
        let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        Self(Matrix3::identity() + kx * s + kx * kx * (1.0 - c))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn compose(&self, other: &RotMat) -> RotMat {
        Self(self.0 * other.0)
    }

    /// Rotation angle of `self^T * other`, in radians.
    pub fn angle_to(&self, other: &RotMat) -> f64 {
        let rel = self.0.transpose() * other.0;
        // atan2 keeps precision near zero, where acos of the trace does not
        let s = Vec3::new(rel[(2, 1)] - rel[(1, 2)], rel[(0, 2)] - rel[(2, 0)], rel[(1, 0)] - rel[(0, 1)]).norm() * 0.5;
        let c = (rel.trace() - 1.0) * 0.5;
        s.atan2(c)
    }
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `Rz(gamma) * Ry(beta) * Rx(alpha)`.
pub fn euler_to_rotmat(e: EulerAngles) -> RotMat {
    RotMat(rot_z(e.gamma) * rot_y(e.beta) * rot_x(e.alpha))
}

/// Result of [`rotmat_to_euler`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerDecomposition {
    pub angles: EulerAngles,
    /// `|beta|` is at pi/2, so only `alpha - gamma` (or `alpha + gamma`) is
    /// determined; `gamma` was fixed to zero.
    pub gimbal_lock: bool,
}

/// Inverse of [`euler_to_rotmat`].
pub fn rotmat_to_euler(r: &RotMat) -> EulerDecomposition {
    let m = &r.0;
    let r31 = m[(2, 0)];
    if r31.abs() > GIMBAL_LOCK_THRESHOLD {
        let beta = if r31 < 0.0 { PI / 2.0 } else { -PI / 2.0 };
        let alpha = (-m[(1, 2)]).atan2(m[(1, 1)]);
        return EulerDecomposition {
            angles: EulerAngles::new(alpha, beta, 0.0).wrapped(),
            gimbal_lock: true,
        };
    }
    let beta = (-r31).atan2(m[(0, 0)].hypot(m[(1, 0)]));
    let alpha = m[(2, 1)].atan2(m[(2, 2)]);
    let gamma = m[(1, 0)].atan2(m[(0, 0)]);
    EulerDecomposition {
        angles: EulerAngles::new(alpha, beta, gamma).wrapped(),
        gimbal_lock: false,
    }
}

/// A rigid frame expressed in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: RotMat,
}

impl Pose {
    pub fn new(position: Vec3, orientation: RotMat) -> Self {
        Self { position, orientation }
    }

    pub fn identity() -> Self {
        Self::new(Vec3::zeros(), RotMat::identity())
    }

    /// From `(x, y, z, alpha, beta, gamma)`.
    pub fn from_params(p: &[f64; 6]) -> Self {
        Self::new(
            Vec3::new(p[0], p[1], p[2]),
            euler_to_rotmat(EulerAngles::new(p[3], p[4], p[5])),
        )
    }

    /// To `(x, y, z, alpha, beta, gamma)`.
    pub fn to_params(&self) -> [f64; 6] {
        let e = rotmat_to_euler(&self.orientation).angles;
        [
            self.position.x,
            self.position.y,
            self.position.z,
            e.alpha,
            e.beta,
            e.gamma,
        ]
    }

    /// Maps a point from this frame into the parent frame.
    pub fn transform_point(&self, local: &Vec3) -> Vec3 {
        self.orientation.rotate(local) + self.position
    }

    /// Maps a parent-frame point into this frame.
    pub fn inverse_transform_point(&self, world: &Vec3) -> Vec3 {
        self.orientation.transpose().rotate(&(world - self.position))
    }

    /// `self * other`: `other` is expressed in `self`'s frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.transform_point(&other.position),
            self.orientation.compose(&other.orientation),
        )
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.orientation.transpose();
        Pose::new(-rt.rotate(&self.position), rt)
    }
}

/// A half-line with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self, GeometryError> {
        let direction = direction
            .try_normalize(1e-300)
            .ok_or(GeometryError::ZeroDirection)?;
        Ok(Self { origin, direction })
    }

    pub fn point_at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    /// Distance from `p` to the infinite line carrying the ray.
    pub fn distance_to_point(&self, p: &Vec3) -> f64 {
        let v = p - self.origin;
        (v - self.direction * v.dot(&self.direction)).norm()
    }
}

/// Pinhole intrinsics without skew or distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    /// Focal length in pixels.
    pub focal_length: f64,
    /// Principal point `(cx, cy)` in pixels.
    pub principal_point: [f64; 2],
    /// `(width, height)` in pixels.
    pub image_size: [u32; 2],
}

impl Intrinsics {
    pub fn principal_point(&self) -> Vec2 {
        Vec2::new(self.principal_point[0], self.principal_point[1])
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= 0.0
            && p.y >= 0.0
            && p.x < f64::from(self.image_size[0])
            && p.y < f64::from(self.image_size[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    /// Camera frame in the world frame.
    pub pose: Pose,
    pub intrinsics: Intrinsics,
}

impl CameraModel {
    pub fn new(pose: Pose, intrinsics: Intrinsics) -> Self {
        Self { pose, intrinsics }
    }

    pub fn focal_length(&self) -> f64 {
        self.intrinsics.focal_length
    }

    /// Depth of a world point along the optical axis.
    pub fn depth(&self, p_w: &Vec3) -> f64 {
        self.pose.inverse_transform_point(p_w).z
    }

    /// Projects a world point to pixels.
    pub fn project(&self, p_w: &Vec3) -> Result<Vec2, GeometryError> {
        let pc = self.pose.inverse_transform_point(p_w);
        if pc.z <= 0.0 {
            return Err(GeometryError::BehindCamera { depth: pc.z });
        }
        let f = self.intrinsics.focal_length;
        let pp = self.intrinsics.principal_point();
        Ok(Vec2::new(f * pc.x / pc.z + pp.x, f * pc.y / pc.z + pp.y))
    }

    /// World-frame vector from the image point toward the scene,
    /// `R * [x - cx, y - cy, f]`, not normalized.
    pub fn pixel_direction(&self, p_i: &Vec2) -> Vec3 {
        let pp = self.intrinsics.principal_point();
        let local = Vec3::new(p_i.x - pp.x, p_i.y - pp.y, self.intrinsics.focal_length);
        self.pose.orientation.rotate(&local)
    }

    /// Ray from the camera center through a pixel.
    pub fn backproject(&self, p_i: &Vec2) -> Ray {
        let d = self.pixel_direction(p_i);
        Ray {
            origin: self.pose.position,
            direction: d.normalize(),
        }
    }

    /// Camera pose that sits at `eye` and looks at `target`, with image "up"
    /// roughly along `up`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Pose, GeometryError> {
        let z = (target - eye)
            .try_normalize(1e-12)
            .ok_or(GeometryError::ZeroDirection)?;
        // image y points down, so the camera y axis is "minus up".
        let x = (-up).cross(&z);
        let orientation = RotMat::from_axes(x, z.cross(&x))?;
        debug_assert!((orientation.matrix().column(2) - z).norm() < 1e-9);
        Ok(Pose::new(eye, orientation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn mat_mul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    out[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        out
    }

    #[test]
    fn euler_zero_is_identity() {
        assert_eq!(*euler_to_rotmat(EulerAngles::default()).matrix(), Matrix3::identity());
    }

    #[test]
    fn euler_quarter_turn_about_z() {
        let r = euler_to_rotmat(EulerAngles::new(0.0, 0.0, PI / 2.0));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!(*r.matrix(), expected, epsilon = 1e-15);
    }

    #[test]
    fn euler_matches_elementary_product() {
        let (a, b, g): (f64, f64, f64) = (0.1, 0.2, 0.3);
        let rx = [[1.0, 0.0, 0.0], [0.0, a.cos(), -a.sin()], [0.0, a.sin(), a.cos()]];
        let ry = [[b.cos(), 0.0, b.sin()], [0.0, 1.0, 0.0], [-b.sin(), 0.0, b.cos()]];
        let rz = [[g.cos(), -g.sin(), 0.0], [g.sin(), g.cos(), 0.0], [0.0, 0.0, 1.0]];
        let oracle = mat_mul(mat_mul(rz, ry), rx);
        let r = euler_to_rotmat(EulerAngles::new(a, b, g));
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(r.matrix()[(i, j)], oracle[i][j], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn euler_round_trip_fixed() {
        assert_eq!(rotmat_to_euler(&RotMat::identity()).angles, EulerAngles::default());
        let d = rotmat_to_euler(&euler_to_rotmat(EulerAngles::new(0.1, 0.2, 0.3)));
        assert!(!d.gimbal_lock);
        assert_abs_diff_eq!(d.angles.alpha, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(d.angles.beta, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(d.angles.gamma, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn gimbal_lock_is_flagged_and_consistent() {
        for beta in [PI / 2.0, -PI / 2.0] {
            let r = euler_to_rotmat(EulerAngles::new(0.4, beta, -0.7));
            let d = rotmat_to_euler(&r);
            assert!(d.gimbal_lock);
            let back = euler_to_rotmat(d.angles);
            assert_abs_diff_eq!(*back.matrix(), *r.matrix(), epsilon = 1e-9);
        }
    }

    #[test]
    fn from_matrix_rejects_reflection() {
        let m = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(RotMat::from_matrix(m, 1e-9).is_err());
    }

    fn test_camera() -> CameraModel {
        CameraModel::new(
            Pose::identity(),
            Intrinsics {
                focal_length: 500.0,
                principal_point: [320.0, 240.0],
                image_size: [640, 480],
            },
        )
    }

    #[test]
    fn project_known_point() {
        let cam = test_camera();
        let p = cam.project(&Vec3::new(100.0, 0.0, 1000.0)).unwrap();
        assert_abs_diff_eq!(p, Vec2::new(370.0, 240.0), epsilon = 1e-12);
        for z in [1.0, 250.0, 1e5] {
            let p = cam.project(&Vec3::new(0.0, 0.0, z)).unwrap();
            assert_eq!(p, Vec2::new(320.0, 240.0));
        }
    }

    #[test]
    fn project_rejects_points_behind() {
        let cam = test_camera();
        assert!(matches!(
            cam.project(&Vec3::new(1.0, 1.0, 0.0)),
            Err(GeometryError::BehindCamera { .. })
        ));
        assert!(cam.project(&Vec3::new(1.0, 1.0, -5.0)).is_err());
    }

    #[test]
    fn principal_point_backprojects_along_axis() {
        let pose = Pose::from_params(&[10.0, -20.0, 30.0, 0.3, -0.2, 1.1]);
        let cam = CameraModel::new(pose, test_camera().intrinsics);
        let ray = cam.backproject(&Vec2::new(320.0, 240.0));
        assert_eq!(ray.origin, pose.position);
        assert_abs_diff_eq!(ray.direction, pose.orientation.matrix().column(2).into_owned(), epsilon = 1e-15);
    }

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let eye = Vec3::new(700.0, 300.0, 200.0);
        let target = Vec3::new(100.0, 0.0, -300.0);
        let pose = CameraModel::look_at(eye, target, Vec3::z()).unwrap();
        let cam = CameraModel::new(pose, test_camera().intrinsics);
        let p = cam.project(&target).unwrap();
        assert_abs_diff_eq!(p, Vec2::new(320.0, 240.0), epsilon = 1e-9);
        // world up maps to image up (negative v)
        let above = cam.project(&(target + Vec3::new(0.0, 0.0, 50.0))).unwrap();
        assert!(above.y < 240.0);
    }

    fn rotation_strategy() -> impl Strategy<Value = RotMat> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            -PI..PI,
        )
            .prop_filter_map("non-zero axis", |(a, angle)| {
                let axis = Vec3::new(a[0], a[1], a[2]);
                (axis.norm() > 1e-3).then(|| RotMat::from_axis_angle(axis, angle))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn rotmat_euler_round_trip(r in rotation_strategy()) {
            let d = rotmat_to_euler(&r);
            let back = euler_to_rotmat(d.angles);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((back.matrix()[(i, j)] - r.matrix()[(i, j)]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn euler_round_trip_away_from_lock(
            a in -3.1f64..3.1, b in -1.5f64..1.5, g in -3.1f64..3.1,
        ) {
            let e = rotmat_to_euler(&euler_to_rotmat(EulerAngles::new(a, b, g))).angles;
            prop_assert!((e.alpha - a).abs() < 1e-9);
            prop_assert!((e.beta - b).abs() < 1e-9);
            prop_assert!((e.gamma - g).abs() < 1e-9);
        }

        #[test]
        fn project_backproject_round_trip(
            params in prop::array::uniform6(-1.0f64..1.0),
            local in prop::array::uniform3(-300.0f64..300.0),
            depth in 50.0f64..3000.0,
        ) {
            let pose = Pose::from_params(&[
                params[0] * 500.0, params[1] * 500.0, params[2] * 500.0,
                params[3] * 3.0, params[4] * 1.4, params[5] * 3.0,
            ]);
            let cam = CameraModel::new(pose, test_camera().intrinsics);
            let p = pose.transform_point(&Vec3::new(local[0], local[1], depth));
            let pix = cam.project(&p).unwrap();
            let ray = cam.backproject(&pix);
            prop_assert!(ray.distance_to_point(&p) < 1e-9);
        }

        /// The ratio identity between the camera-to-marker vector and the
        /// unnormalized pixel direction: each component ratio equals the norm ratio.
        #[test]
        fn marker_ratio_identity(
            params in prop::array::uniform6(-1.0f64..1.0),
            local in prop::array::uniform3(-200.0f64..200.0),
            depth in 300.0f64..2000.0,
        ) {
            let pose = Pose::from_params(&[
                params[0] * 500.0, params[1] * 500.0, params[2] * 500.0,
                params[3] * 3.0, params[4] * 1.4, params[5] * 3.0,
            ]);
            let cam = CameraModel::new(pose, test_camera().intrinsics);
            let marker = pose.transform_point(&Vec3::new(local[0], local[1], depth));
            let pix = cam.project(&marker).unwrap();
            let v_c2m = marker - pose.position;
            let v_i2c = cam.pixel_direction(&pix);
            let norm_ratio = v_c2m.norm() / v_i2c.norm();
            for k in 0..3 {
                // skip components too close to zero for a meaningful ratio
                if v_i2c[k].abs() > 1e-3 * v_i2c.norm() {
                    let ratio = v_c2m[k] / v_i2c[k];
                    prop_assert!((ratio - norm_ratio).abs() <= 1e-9 * norm_ratio);
                }
            }
        }
    }
}
