//! Small fixed-size tensors for plane kinematics.
//!
//! Second-order tensors are stored column-major as `[x11, x21, x12, x22]`.
//! The same layout is used for the vectorised macroscopic quantities, so a
//! fourth-order tangent is a plain 4×4 matrix acting on that vector.

use core::ops::{Add, Mul, Sub};

pub type Vec2 = [f64; 2];
pub type Vec4 = [f64; 4];
pub type Mat4 = [[f64; 4]; 4];

/// Position of component (i, j) in the column-major vector layout.
#[inline]
pub const fn idx(i: usize, j: usize) -> usize {
    i + 2 * j
}

/// 2×2 tensor, column-major.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Mat2(pub Vec4);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([1.0, 0.0, 0.0, 1.0]);
    pub const ZERO: Mat2 = Mat2([0.0; 4]);

    /// Build from row-wise entries.
    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2([a11, a21, a12, a22])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[idx(i, j)]
    }

    #[inline]
    pub fn det(&self) -> f64 {
        let a = &self.0;
        a[0] * a[3] - a[1] * a[2]
    }

    /// Cofactor `det(F) F^{-T}`.
    #[inline]
    pub fn cofactor(&self) -> Mat2 {
        let a = &self.0;
        Mat2([a[3], -a[2], -a[1], a[0]])
    }

    #[inline]
    pub fn transpose(&self) -> Mat2 {
        let a = &self.0;
        Mat2([a[0], a[2], a[1], a[3]])
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(self.cofactor().transpose().scale(1.0 / d))
    }

    #[inline]
    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[3]
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Mat2 {
        let a = &self.0;
        Mat2([a[0] * s, a[1] * s, a[2] * s, a[3] * s])
    }

    /// Double contraction `A : B`.
    #[inline]
    pub fn ddot(&self, other: &Mat2) -> f64 {
        dot4(&self.0, &other.0)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.ddot(self))
    }

    pub fn matmul(&self, b: &Mat2) -> Mat2 {
        let mut c = [0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                c[idx(i, j)] = self.get(i, 0) * b.get(0, j) + self.get(i, 1) * b.get(1, j);
            }
        }
        Mat2(c)
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        [
            self.get(0, 0) * v[0] + self.get(0, 1) * v[1],
            self.get(1, 0) * v[0] + self.get(1, 1) * v[1],
        ]
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2(core::array::from_fn(|k| self.0[k] + o.0[k]))
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2(core::array::from_fn(|k| self.0[k] - o.0[k]))
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: f64) -> Mat2 {
        self.scale(s)
    }
}

/// Second derivative of `det` with respect to the vectorised tensor.
/// `d(cof F) = CM · dF`.
pub const CM: Mat4 = [
    [0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0, 0.0],
    [0.0, -1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0],
];

pub const I4: Mat4 = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

#[inline]
pub fn dot4(a: &Vec4, b: &Vec4) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

#[inline]
pub fn outer4(a: &Vec4, b: &Vec4) -> Mat4 {
    core::array::from_fn(|i| core::array::from_fn(|j| a[i] * b[j]))
}

pub fn mat4_vec(m: &Mat4, v: &Vec4) -> Vec4 {
    core::array::from_fn(|i| dot4(&m[i], v))
}

pub fn mat4_transpose(m: &Mat4) -> Mat4 {
    core::array::from_fn(|i| core::array::from_fn(|j| m[j][i]))
}

pub fn mat4_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    core::array::from_fn(|i| {
        core::array::from_fn(|j| (0..4).map(|k| a[i][k] * b[k][j]).sum())
    })
}

/// `qᵀ M p`.
pub fn bilinear4(q: &Vec4, m: &Mat4, p: &Vec4) -> f64 {
    dot4(q, &mat4_vec(m, p))
}

/// Largest absolute entry.
pub fn mat4_max_abs(m: &Mat4) -> f64 {
    m.iter().flatten().fold(0.0f64, |a, &x| a.max(x.abs()))
}

pub fn mat4_asymmetry(m: &Mat4) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..i {
            worst = worst.max((m[i][j] - m[j][i]).abs());
        }
    }
    worst
}
