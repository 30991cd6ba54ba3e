//! Small fixed-size linear algebra used throughout the crate.
//!
//! Everything here is `Copy` and allocation-free; matrices are row-major.

use core::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.norm_squared())
    }

    /// Unit vector in the same direction; the zero vector maps to itself.
    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn lerp(self, o: Vec3, s: f64) -> Vec3 {
        self + (o - self) * s
    }

    pub fn max_abs_diff(self, o: Vec3) -> f64 {
        let d = self - o;
        libm::fmax(libm::fabs(d.x), libm::fmax(libm::fabs(d.y), libm::fabs(d.z)))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_rows(r0: Vec3, r1: Vec3, r2: Vec3) -> Self {
        Mat3([r0.to_array(), r1.to_array(), r2.to_array()])
    }

    pub fn from_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> Self {
        Mat3::from_rows(c0, c1, c2).transpose()
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3::from_array(self.0[i])
    }

    pub fn col(&self, j: usize) -> Vec3 {
        Vec3::new(self.0[0][j], self.0[1][j], self.0[2][j])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn determinant(&self) -> f64 {
        self.row(0).dot(self.row(1).cross(self.row(2)))
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.0[i][0] * o.0[0][j] + self.0[i][1] * o.0[1][j] + self.0[i][2] * o.0[2][j];
            }
        }
        Mat3(out)
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, o: &Mat3) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                worst = libm::fmax(worst, libm::fabs(self.0[i][j] - o.0[i][j]));
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    /// Rotation by `angle` radians about `axis` (Rodrigues). `axis` need not be unit length.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Mat3 {
        let k = axis.normalized();
        let (s, c) = (libm::sin(angle), libm::cos(angle));
        let t = 1.0 - c;
        Mat3([
            [c + k.x * k.x * t, k.x * k.y * t - k.z * s, k.x * k.z * t + k.y * s],
            [k.y * k.x * t + k.z * s, c + k.y * k.y * t, k.y * k.z * t - k.x * s],
            [k.z * k.x * t - k.y * s, k.z * k.y * t + k.x * s, c + k.z * k.z * t],
        ])
    }

    /// Exponential map of a rotation vector.
    pub fn exp(rotvec: Vec3) -> Mat3 {
        let angle = rotvec.norm();
        if angle == 0.0 {
            Mat3::IDENTITY
        } else {
            Mat3::from_axis_angle(rotvec, angle)
        }
    }

    /// Logarithm of a rotation matrix as a rotation vector with angle in `[0, pi]`.
    pub fn log(&self) -> Vec3 {
        Quat::from_matrix(self).to_rotvec()
    }

    /// Geodesic angle of this rotation, in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        Quat::from_matrix(self).angle()
    }
}

/// Unit quaternion `(w, x, y, z)`, kept crate-internal apart from conversion helpers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub fn from_matrix(m: &Mat3) -> Quat {
        let r = &m.0;
        let tr = m.trace();
        let q = if tr > 0.0 {
            let s = libm::sqrt(tr + 1.0) * 2.0;
            Quat { w: 0.25 * s, x: (r[2][1] - r[1][2]) / s, y: (r[0][2] - r[2][0]) / s, z: (r[1][0] - r[0][1]) / s }
        } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
            let s = libm::sqrt(1.0 + r[0][0] - r[1][1] - r[2][2]) * 2.0;
            Quat { w: (r[2][1] - r[1][2]) / s, x: 0.25 * s, y: (r[0][1] + r[1][0]) / s, z: (r[0][2] + r[2][0]) / s }
        } else if r[1][1] > r[2][2] {
            let s = libm::sqrt(1.0 + r[1][1] - r[0][0] - r[2][2]) * 2.0;
            Quat { w: (r[0][2] - r[2][0]) / s, x: (r[0][1] + r[1][0]) / s, y: 0.25 * s, z: (r[1][2] + r[2][1]) / s }
        } else {
            let s = libm::sqrt(1.0 + r[2][2] - r[0][0] - r[1][1]) * 2.0;
            Quat { w: (r[1][0] - r[0][1]) / s, x: (r[0][2] + r[2][0]) / s, y: (r[1][2] + r[2][1]) / s, z: 0.25 * s }
        };
        q.normalized()
    }

    pub fn normalized(self) -> Quat {
        let n = libm::sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z);
        Quat { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn to_matrix(self) -> Mat3 {
        let Quat { w, x, y, z } = self.normalized();
        Mat3([
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ])
    }

    fn vec_norm(self) -> f64 {
        libm::sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
    }

    pub fn angle(self) -> f64 {
        2.0 * libm::atan2(self.vec_norm(), libm::fabs(self.w))
    }

    pub fn to_rotvec(self) -> Vec3 {
        // Pick the hemisphere with w >= 0 so the angle lands in [0, pi].
        let q = if self.w < 0.0 { Quat { w: -self.w, x: -self.x, y: -self.y, z: -self.z } } else { self };
        let vn = q.vec_norm();
        if vn == 0.0 {
            return Vec3::ZERO;
        }
        let angle = 2.0 * libm::atan2(vn, q.w);
        Vec3::new(q.x, q.y, q.z) * (angle / vn)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    #[test]
    fn log_exp_round_trip_near_pi() {
        for angle in [0.0, 1e-12, 0.3, 2.0, PI - 1e-9, PI] {
            let axis = Vec3::new(0.3, -0.5, 0.8).normalized();
            let r = Mat3::from_axis_angle(axis, angle);
            let back = Mat3::exp(r.log());
            assert!(back.max_abs_diff(&r) < 1e-12, "angle {angle}");
            assert!((r.rotation_angle() - angle).abs() < 1e-12);
        }
    }

    #[test]
    fn quaternion_matrix_round_trip() {
        let r = Mat3::from_axis_angle(Vec3::new(-1.0, 2.0, 0.5), 2.9);
        assert!(Quat::from_matrix(&r).to_matrix().max_abs_diff(&r) < 1e-14);
    }
}
