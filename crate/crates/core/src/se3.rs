//! Rigid-body transforms, 6D poses and pinhole camera primitives.
//!
//! # Euler convention
//!
//! Every Euler triple in this crate is **intrinsic Z-Y-X** (yaw, pitch, roll):
//!
//! ```text
//! R(alpha, beta, gamma) = Rz(alpha) * Ry(beta) * Rx(gamma)
//! ```
//!
//! Read in the fixed frame, `gamma` (roll about x) is applied first, then
//! `beta` about y, then `alpha` about z. Angles are stored wrapped to the
//! half-open interval `[-pi, pi)`. At gimbal lock (`|beta|` within `1e-6` of
//! `pi/2`) the decomposition sets `gamma = 0` and folds the free angle into
//! `alpha`.
//!
//! # Camera convention
//!
//! Camera frames are right-handed with `+z` along the optical axis, `+x` to
//! the right of the image and `+y` down. Extrinsics map world points into the
//! camera (`x_cam = E * x_world`).

use core::f64::consts::PI;

use crate::math::{Mat3, Quat, Vec3};

/// Orthonormality tolerance for rotation matrices.
pub const ORTHONORMAL_TOL: f64 = 1e-9;
/// `|beta|` this close to `pi/2` is treated as gimbal lock.
pub const GIMBAL_LOCK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum Se3Error {
    #[error("rotation matrix is not orthonormal with det +1 (deviation {deviation:e})")]
    NonOrthonormalInput { deviation: f64 },
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("invalid intrinsics: focal lengths must be positive")]
    InvalidIntrinsics,
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
}

/// Wrap an angle into `[-pi, pi)`.
///
/// ```
/// use wristpipe_core::se3::wrap_angle;
/// assert_eq!(wrap_angle(core::f64::consts::PI).unwrap(), -core::f64::consts::PI);
/// ```
pub fn wrap_angle(theta: f64) -> Result<f64, Se3Error> {
    if !theta.is_finite() {
        return Err(Se3Error::NonFiniteInput);
    }
    Ok(wrap(theta))
}

/// Infallible wrap used on values already known to be finite.
pub(crate) fn wrap(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let two_pi = 2.0 * PI;
    let mut r = theta - two_pi * libm::floor((theta + PI) / two_pi);
    // Rounding can land exactly on the excluded endpoint.
    if r >= PI {
        r -= two_pi;
    }
    if r < -PI {
        r += two_pi;
    }
    r
}

/// Intrinsic Z-Y-X Euler triple in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerZyx {
    /// Yaw about z.
    pub alpha: f64,
    /// Pitch about y.
    pub beta: f64,
    /// Roll about x.
    pub gamma: f64,
}

impl EulerZyx {
    pub const fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn wrapped(self) -> Self {
        Self::new(wrap(self.alpha), wrap(self.beta), wrap(self.gamma))
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }
}

pub fn rot_x(a: f64) -> Mat3 {
    let (s, c) = (libm::sin(a), libm::cos(a));
    Mat3([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
}

pub fn rot_y(a: f64) -> Mat3 {
    let (s, c) = (libm::sin(a), libm::cos(a));
    Mat3([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
}

pub fn rot_z(a: f64) -> Mat3 {
    let (s, c) = (libm::sin(a), libm::cos(a));
    Mat3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
}

pub fn euler_to_matrix(e: EulerZyx) -> Mat3 {
    let (sa, ca) = (libm::sin(e.alpha), libm::cos(e.alpha));
    let (sb, cb) = (libm::sin(e.beta), libm::cos(e.beta));
    let (sg, cg) = (libm::sin(e.gamma), libm::cos(e.gamma));
    Mat3([
        [ca * cb, ca * sb * sg - sa * cg, ca * sb * cg + sa * sg],
        [sa * cb, sa * sb * sg + ca * cg, sa * sb * cg - ca * sg],
        [-sb, cb * sg, cb * cg],
    ])
}

/// Worst deviation of `m` from a proper rotation: max of `|m^T m - I|` entries and `|det - 1|`.
pub fn orthonormality_error(m: &Mat3) -> f64 {
    let mtm = m.transpose().mul_mat(m);
    let dev = mtm.max_abs_diff(&Mat3::IDENTITY);
    libm::fmax(dev, libm::fabs(m.determinant() - 1.0))
}

pub fn check_rotation(m: &Mat3) -> Result<(), Se3Error> {
    if !m.is_finite() {
        return Err(Se3Error::NonFiniteInput);
    }
    let deviation = orthonormality_error(m);
    if deviation > ORTHONORMAL_TOL {
        return Err(Se3Error::NonOrthonormalInput { deviation });
    }
    Ok(())
}

pub fn matrix_to_euler(m: &Mat3) -> Result<EulerZyx, Se3Error> {
    check_rotation(m)?;
    Ok(matrix_to_euler_unchecked(m))
}

pub(crate) fn matrix_to_euler_unchecked(m: &Mat3) -> EulerZyx {
    let r = &m.0;
    let cb = libm::sqrt(r[0][0] * r[0][0] + r[1][0] * r[1][0]);
    let beta = libm::atan2(-r[2][0], cb);
    if libm::fabs(libm::fabs(beta) - PI / 2.0) <= GIMBAL_LOCK_TOL {
        // Only alpha -/+ gamma is observable; pin gamma to zero.
        let alpha = libm::atan2(-r[0][1], r[1][1]);
        EulerZyx::new(alpha, beta, 0.0).wrapped()
    } else {
        let alpha = libm::atan2(r[1][0], r[0][0]);
        let gamma = libm::atan2(r[2][1], r[2][2]);
        EulerZyx::new(alpha, beta, gamma).wrapped()
    }
}

/// Proper rigid transform `x -> rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform { rotation: Mat3::IDENTITY, translation: Vec3::ZERO };

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, Se3Error> {
        check_rotation(&rotation)?;
        if !translation.is_finite() {
            return Err(Se3Error::NonFiniteInput);
        }
        Ok(Self { rotation, translation })
    }

    /// Caller guarantees `rotation` is a proper rotation.
    pub(crate) const fn from_parts(rotation: Mat3, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::from_parts(Mat3::IDENTITY, t)
    }

    pub fn from_rotation(r: Mat3) -> Result<Self, Se3Error> {
        Self::new(r, Vec3::ZERO)
    }

    pub fn from_euler(translation: Vec3, e: EulerZyx) -> Self {
        Self::from_parts(euler_to_matrix(e), translation)
    }

    /// Rotation from a rotation vector (axis * angle).
    pub fn from_rotvec(translation: Vec3, rotvec: Vec3) -> Self {
        Self::from_parts(Mat3::exp(rotvec), translation)
    }

    /// Build from a quaternion `(w, x, y, z)`; it is normalised first.
    pub fn from_quaternion(q: [f64; 4], translation: Vec3) -> Result<Self, Se3Error> {
        if q.iter().any(|v| !v.is_finite()) || q.iter().all(|v| *v == 0.0) {
            return Err(Se3Error::NonFiniteInput);
        }
        Self::new(Quat { w: q[0], x: q[1], y: q[2], z: q[3] }.to_matrix(), translation)
    }

    /// Quaternion `(w, x, y, z)` with `w >= 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let q = Quat::from_matrix(&self.rotation);
        if q.w < 0.0 {
            [-q.w, -q.x, -q.y, -q.z]
        } else {
            [q.w, q.x, q.y, q.z]
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.mul_mat(&other.rotation),
            translation: self.rotation.mul_vec(other.translation) + self.translation,
        }
    }

    pub fn invert(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -rt.mul_vec(self.translation) }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.translation
    }

    pub fn transform_vector(&self, v: Vec3) -> Vec3 {
        self.rotation.mul_vec(v)
    }

    /// Homogeneous 4x4 matrix, row-major.
    pub fn to_homogeneous(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation.0;
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn euler(&self) -> EulerZyx {
        matrix_to_euler_unchecked(&self.rotation)
    }

    pub fn to_pose(&self) -> Pose6D {
        Pose6D::from_transform(self)
    }

    /// Max of translation difference (m) and rotation-matrix entry difference.
    pub fn max_abs_diff(&self, o: &RigidTransform) -> f64 {
        libm::fmax(self.translation.max_abs_diff(o.translation), self.rotation.max_abs_diff(&o.rotation))
    }

    /// Translation distance in meters and geodesic rotation angle in radians.
    pub fn distance(&self, o: &RigidTransform) -> (f64, f64) {
        let dt = (self.translation - o.translation).norm();
        let dr = self.rotation.transpose().mul_mat(&o.rotation).rotation_angle();
        (dt, dr)
    }

    /// Linear translation blend and constant-angular-velocity rotation blend, `s` in `[0, 1]`.
    pub fn interpolate(&self, o: &RigidTransform, s: f64) -> RigidTransform {
        let delta = self.rotation.transpose().mul_mat(&o.rotation).log();
        RigidTransform {
            rotation: self.rotation.mul_mat(&Mat3::exp(delta * s)),
            translation: self.translation.lerp(o.translation, s),
        }
    }
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(p: &RigidTransform) -> RigidTransform {
    p.invert()
}

/// `invert(reference) ∘ target`: `target` expressed in the `reference` frame.
pub fn relative_pose(reference: &RigidTransform, target: &RigidTransform) -> RigidTransform {
    reference.invert().compose(target)
}

/// Position plus intrinsic Z-Y-X Euler orientation with wrapped angles.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose6D {
    translation: Vec3,
    orientation: EulerZyx,
}

impl Pose6D {
    pub fn new(translation: Vec3, orientation: EulerZyx) -> Self {
        Self { translation, orientation: orientation.wrapped() }
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(Vec3::new(a[0], a[1], a[2]), EulerZyx::new(a[3], a[4], a[5]))
    }

    pub fn to_array(&self) -> [f64; 6] {
        let t = self.translation;
        let e = self.orientation;
        [t.x, t.y, t.z, e.alpha, e.beta, e.gamma]
    }

    pub fn from_transform(t: &RigidTransform) -> Self {
        Self { translation: t.translation(), orientation: t.euler() }
    }

    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform::from_euler(self.translation, self.orientation)
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn orientation(&self) -> EulerZyx {
        self.orientation
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        euler_to_matrix(self.orientation)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Translation error (m) and rotation geodesic error (rad) against `o`.
    pub fn error_to(&self, o: &Pose6D) -> (f64, f64) {
        self.to_transform().distance(&o.to_transform())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, Se3Error> {
        if ![fx, fy, cx, cy].iter().all(|v| v.is_finite()) {
            return Err(Se3Error::NonFiniteInput);
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Se3Error::InvalidIntrinsics);
        }
        Ok(Self { fx, fy, cx, cy })
    }
}

/// Intrinsics and world-to-camera extrinsic for one video frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrame {
    pub frame_id: u64,
    pub intrinsics: Intrinsics,
    pub extrinsic_world_to_cam: RigidTransform,
}

impl CameraFrame {
    pub fn new(frame_id: u64, intrinsics: Intrinsics, extrinsic_world_to_cam: RigidTransform) -> Self {
        Self { frame_id, intrinsics, extrinsic_world_to_cam }
    }

    pub fn cam_to_world(&self) -> RigidTransform {
        self.extrinsic_world_to_cam.invert()
    }

    pub fn camera_center(&self) -> Vec3 {
        self.cam_to_world().translation()
    }
}

/// Back-project a pixel at metric depth into the camera frame.
pub fn lift_pixel(pixel: (f64, f64), depth: f64, k: &Intrinsics) -> Result<Vec3, Se3Error> {
    if !(pixel.0.is_finite() && pixel.1.is_finite() && depth.is_finite()) {
        return Err(Se3Error::NonFiniteInput);
    }
    if depth <= 0.0 {
        return Err(Se3Error::NonPositiveDepth(depth));
    }
    Ok(Vec3::new(depth * (pixel.0 - k.cx) / k.fx, depth * (pixel.1 - k.cy) / k.fy, depth))
}

/// Pinhole projection of a camera-frame point.
pub fn project(p: Vec3, k: &Intrinsics) -> Result<(f64, f64), Se3Error> {
    if !p.is_finite() {
        return Err(Se3Error::NonFiniteInput);
    }
    if p.z <= 0.0 {
        return Err(Se3Error::BehindCamera(p.z));
    }
    Ok((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

/// World-to-camera extrinsic for a camera at `eye` looking at `target`.
///
/// `world_up` fixes the roll; the image `+y` axis points away from it.
pub fn look_at(eye: Vec3, target: Vec3, world_up: Vec3) -> RigidTransform {
    let forward = (target - eye).normalized();
    let mut right = forward.cross(world_up);
    if right.norm() < 1e-9 {
        right = forward.cross(Vec3::X);
    }
    let right = right.normalized();
    let down = forward.cross(right);
    // Columns of cam->world rotation are the camera axes in world coordinates.
    let cam_to_world = RigidTransform::from_parts(Mat3::from_cols(right, down, forward), eye);
    cam_to_world.invert()
}
