use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

/// A 2×2 complex matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub a11: Complex64,
    pub a12: Complex64,
    pub a21: Complex64,
    pub a22: Complex64,
}

/// A column vector `(x1, x2)`.
pub type Vec2 = [Complex64; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 {
        a11: ONE,
        a12: ZERO,
        a21: ZERO,
        a22: ONE,
    };

    pub fn new(a11: Complex64, a12: Complex64, a21: Complex64, a22: Complex64) -> Self {
        Mat2 { a11, a12, a21, a22 }
    }

    pub fn real(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2::new(a11.into(), a12.into(), a21.into(), a22.into())
    }

    pub fn diag(d1: Complex64, d2: Complex64) -> Self {
        Mat2::new(d1, ZERO, ZERO, d2)
    }

    /// Column-major state layout used by the integrators: `[a11, a21, a12, a22]`.
    pub fn to_columns(&self) -> [Complex64; 4] {
        [self.a11, self.a21, self.a12, self.a22]
    }

    pub fn from_columns(c: &[Complex64; 4]) -> Self {
        Mat2::new(c[0], c[2], c[1], c[3])
    }

    pub fn trace(&self) -> Complex64 {
        self.a11 + self.a22
    }

    pub fn det(&self) -> Complex64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// `tr² − 4 det`.
    pub fn discr(&self) -> Complex64 {
        let t = self.trace();
        t * t - 4.0 * self.det()
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d.norm() == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Mat2::new(self.a22 / d, -self.a12 / d, -self.a21 / d, self.a11 / d))
    }

    pub fn mul_vec(&self, v: &Vec2) -> Vec2 {
        [self.a11 * v[0] + self.a12 * v[1], self.a21 * v[0] + self.a22 * v[1]]
    }

    pub fn scale(&self, s: Complex64) -> Mat2 {
        Mat2::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }

    pub fn max_abs(&self) -> f64 {
        [self.a11, self.a12, self.a21, self.a22]
            .iter()
            .fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Max-entry distance.
    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        (*self - *other).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        [self.a11, self.a12, self.a21, self.a22].iter().all(|z| z.is_finite())
    }

    pub fn conj(&self) -> Mat2 {
        Mat2::new(self.a11.conj(), self.a12.conj(), self.a21.conj(), self.a22.conj())
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a11 + o.a11, self.a12 + o.a12, self.a21 + o.a21, self.a22 + o.a22)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a11 - o.a11, self.a12 - o.a12, self.a21 - o.a21, self.a22 - o.a22)
    }
}
