//! Minimal 3D vector and quaternion types for the rigid-body simulator.
//!
//! Conventions: world frame is z-up; quaternions map body to world; Euler
//! angles are intrinsic Z-Y-X (yaw, pitch, roll).

use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use crate::real::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn unit_z() -> Self {
        Self::new(T::zero(), T::zero(), T::one())
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// Unit quaternion `w + xi + yj + zk`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Default for Quat<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Quat<T> {
    pub fn identity() -> Self {
        Self { w: T::one(), x: T::zero(), y: T::zero(), z: T::zero() }
    }

    pub fn norm(self) -> T {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn mul(self, o: Self) -> Self {
        Self {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    /// Rotation by `angle` about a unit `axis`.
    pub fn from_axis_angle(axis: Vec3<T>, angle: T) -> Self {
        let half = angle * T::lit(0.5);
        let s = half.sin();
        Self { w: half.cos(), x: axis.x * s, y: axis.y * s, z: axis.z * s }
    }

    /// Exponential map of a rotation vector (axis times angle).
    pub fn from_rotation_vector(v: Vec3<T>) -> Self {
        let angle = v.norm();
        if angle == T::zero() {
            return Self::identity();
        }
        Self::from_axis_angle(v.scale(T::one() / angle), angle)
    }

    /// Intrinsic Z-Y-X composition `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_euler(roll: T, pitch: T, yaw: T) -> Self {
        let half = T::lit(0.5);
        let (sr, cr) = (roll * half).sin_cos();
        let (sp, cp) = (pitch * half).sin_cos();
        let (sy, cy) = (yaw * half).sin_cos();
        Self {
            w: cr * cp * cy + sr * sp * sy,
            x: sr * cp * cy - cr * sp * sy,
            y: cr * sp * cy + sr * cp * sy,
            z: cr * cp * sy - sr * sp * cy,
        }
    }

    /// Returns `(roll, pitch, yaw)`.
    pub fn to_euler(self) -> (T, T, T) {
        let one = T::one();
        let two = T::lit(2.0);
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let roll = (two * (w * x + y * z)).atan2(one - two * (x * x + y * y));
        let sin_pitch = (two * (w * y - z * x)).max(-one).min(one);
        let pitch = sin_pitch.asin();
        let yaw = (two * (w * z + x * y)).atan2(one - two * (y * y + z * z));
        (roll, pitch, yaw)
    }

    /// Rotates a body-frame vector into the world frame.
    pub fn rotate(self, v: Vec3<T>) -> Vec3<T> {
        let u = Vec3::new(self.x, self.y, self.z);
        let two = T::lit(2.0);
        let t = u.cross(v).scale(two);
        v + t.scale(self.w) + u.cross(t)
    }

    /// Rotates a world-frame vector into the body frame.
    pub fn rotate_inverse(self, v: Vec3<T>) -> Vec3<T> {
        self.conjugate().rotate(v)
    }

    pub fn conjugate(self) -> Self {
        Self { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}
