//! Dense 3-vectors, 3x3 matrices and rotations.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

/// A real 3-vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);
    pub const E1: Vec3 = Vec3([1.0, 0.0, 0.0]);
    pub const E2: Vec3 = Vec3([0.0, 1.0, 0.0]);
    pub const E3: Vec3 = Vec3([0.0, 0.0, 1.0]);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    pub fn basis(i: usize) -> Self {
        let mut v = [0.0; 3];
        v[i] = 1.0;
        Vec3(v)
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Vec3([s[0], s[1], s[2]])
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        let [a1, a2, a3] = self.0;
        let [b1, b2, b3] = o.0;
        Vec3([a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1])
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    /// Componentwise product, i.e. multiplication by a diagonal matrix.
    pub fn hadamard(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] * o.0[0], self.0[1] * o.0[1], self.0[2] * o.0[2]])
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Vec3 {
        Vec3([f(self.0[0]), f(self.0[1]), f(self.0[2])])
    }

    pub fn is_finite(self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(self) -> f64 {
        self.0.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn sum(self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    pub fn x(self) -> f64 {
        self.0[0]
    }
    pub fn y(self) -> f64 {
        self.0[1]
    }
    pub fn z(self) -> f64 {
        self.0[2]
    }
}

/// det(a, b, c) with a, b, c as columns.
pub fn det3(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    a.dot(b.cross(c))
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vec3 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
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
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

/// A real 3x3 matrix stored row-major.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const ZERO: Mat3 = Mat3([[0.0; 3]; 3]);
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn diag(d: Vec3) -> Mat3 {
        Mat3([[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]])
    }

    pub fn from_rows(r0: Vec3, r1: Vec3, r2: Vec3) -> Mat3 {
        Mat3([r0.0, r1.0, r2.0])
    }

    pub fn from_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> Mat3 {
        Mat3::from_rows(c0, c1, c2).transpose()
    }

    /// a ⊗ b, the matrix x ↦ a⟨b, x⟩.
    pub fn outer(a: Vec3, b: Vec3) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (k, x) in row.iter_mut().enumerate() {
                *x = a[i] * b[k];
            }
        }
        Mat3(m)
    }

    pub fn from_flat(s: &[f64]) -> Mat3 {
        Mat3([[s[0], s[1], s[2]], [s[3], s[4], s[5]], [s[6], s[7], s[8]]])
    }

    pub fn to_flat(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3(self.0[i])
    }

    pub fn col(&self, k: usize) -> Vec3 {
        Vec3([self.0[0][k], self.0[1][k], self.0[2][k]])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn det(&self) -> f64 {
        det3(self.col(0), self.col(1), self.col(2))
    }

    /// Inverse via the adjugate; `None` when |det| is below `1e-300`.
    pub fn inverse(&self) -> Option<Mat3> {
        let d = self.det();
        if d.abs() < 1e-300 || !d.is_finite() {
            return None;
        }
        let (c0, c1, c2) = (self.col(0), self.col(1), self.col(2));
        Some(Mat3::from_rows(c1.cross(c2), c2.cross(c0), c0.cross(c1)) * (1.0 / d))
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (*self - self.transpose()).max_abs() <= tol
    }

    /// Matrix commutator [self, o].
    pub fn commutator(&self, o: &Mat3) -> Mat3 {
        *self * *o - *o * *self
    }
}

impl Index<(usize, usize)> for Mat3 {
    type Output = f64;
    fn index(&self, (i, k): (usize, usize)) -> &f64 {
        &self.0[i][k]
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, o: Mat3) -> Mat3 {
        let mut m = self.0;
        for (i, row) in m.iter_mut().enumerate() {
            for (k, x) in row.iter_mut().enumerate() {
                *x += o.0[i][k];
            }
        }
        Mat3(m)
    }
}

impl Sub for Mat3 {
    type Output = Mat3;
    fn sub(self, o: Mat3) -> Mat3 {
        self + o * -1.0
    }
}

impl Mul<f64> for Mat3 {
    type Output = Mat3;
    fn mul(self, s: f64) -> Mat3 {
        let mut m = self.0;
        m.iter_mut().flatten().for_each(|x| *x *= s);
        Mat3(m)
    }
}

impl Mul<Vec3> for Mat3 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        Vec3([self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v)])
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, o: Mat3) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (k, x) in row.iter_mut().enumerate() {
                *x = (0..3).map(|l| self.0[i][l] * o.0[l][k]).sum();
            }
        }
        Mat3(m)
    }
}

/// A matrix in SO(3).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Mat3", into = "Mat3")]
pub struct Rotation(Mat3);

/// Tolerance for orthogonality and unit determinant of a [`Rotation`].
pub const ROTATION_TOL: f64 = 1e-12;

impl Rotation {
    pub const IDENTITY: Rotation = Rotation(Mat3::IDENTITY);

    /// Accepts `m` if it is orthogonal with det +1 within `tol`.
    pub fn try_new(m: Mat3, tol: f64) -> Result<Rotation> {
        let defect = (m.transpose() * m - Mat3::IDENTITY).max_abs();
        let det = m.det();
        if det < 0.0 {
            return Err(Error::NonOrientable { det });
        }
        if defect > tol || (det - 1.0).abs() > tol {
            return Err(Error::NearSingular(format!(
                "orthogonality defect {defect:e}, det {det}"
            )));
        }
        Ok(Rotation(m))
    }

    /// Wraps `m` without checking; callers guarantee membership in SO(3).
    pub fn from_matrix_unchecked(m: Mat3) -> Rotation {
        Rotation(m)
    }

    /// Rotation by `angle` about the unit direction of `axis`.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Rotation {
        let n = axis.norm();
        if n == 0.0 {
            return Rotation::IDENTITY;
        }
        exp_rot(axis * (1.0 / n), angle)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn inverse(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    /// Applies A⁻¹ = Aᵀ to `x`.
    pub fn inv_apply(&self, x: Vec3) -> Vec3 {
        self.0.transpose() * x
    }

    pub fn orthogonality_defect(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::IDENTITY).max_abs()
    }
}

impl TryFrom<Mat3> for Rotation {
    type Error = Error;
    fn try_from(m: Mat3) -> Result<Rotation> {
        Rotation::try_new(m, 1e-9)
    }
}

impl From<Rotation> for Mat3 {
    fn from(r: Rotation) -> Mat3 {
        r.0
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, o: Rotation) -> Rotation {
        Rotation(self.0 * o.0)
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        self.0 * v
    }
}

/// The antisymmetric matrix with hat(w)·x = w × x.
pub fn hat(w: Vec3) -> Mat3 {
    let [a, b, c] = w.0;
    Mat3([[0.0, -c, b], [c, 0.0, -a], [-b, a, 0.0]])
}

/// Inverse of [`hat`] on the antisymmetric part of `m`.
pub fn vee(m: &Mat3) -> Vec3 {
    Vec3([
        0.5 * (m.0[2][1] - m.0[1][2]),
        0.5 * (m.0[0][2] - m.0[2][0]),
        0.5 * (m.0[1][0] - m.0[0][1]),
    ])
}

/// e^{t hat(w)} by the Rodrigues formula.
pub fn exp_rot(w: Vec3, t: f64) -> Rotation {
    let k = hat(w * t);
    let theta = w.norm() * t.abs();
    // coefficients sin θ / θ and (1 − cos θ) / θ², by series near θ = 0
    let (s, c) = if theta < 1e-6 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    Rotation(Mat3::IDENTITY + k * s + k * k * c)
}

/// The special-orthogonal polar factor of `m`.
///
/// Uses the Newton iteration X ← (X + X⁻ᵀ)/2, which converges quadratically to
/// the orthogonal polar factor and preserves the sign of the determinant.
pub fn orthonormalize(m: &Mat3) -> Result<Rotation> {
    let det = m.det();
    if !det.is_finite() || det.abs() < 1e-8 * m.frobenius().powi(3).max(1e-300) {
        return Err(Error::NearSingular(format!("det = {det:e}")));
    }
    if det < 0.0 {
        return Err(Error::NonOrientable { det });
    }
    let mut x = *m;
    for _ in 0..60 {
        let inv_t = x
            .inverse()
            .ok_or_else(|| Error::NearSingular("singular iterate".into()))?
            .transpose();
        let next = (x + inv_t) * 0.5;
        let change = (next - x).max_abs();
        x = next;
        if change < 1e-15 {
            break;
        }
    }
    Rotation::try_new(x, 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close_m(a: &Mat3, b: &Mat3, tol: f64) -> bool {
        (*a - *b).max_abs() <= tol
    }

    // truncated power series of the matrix exponential
    fn series_exp(m: &Mat3) -> Mat3 {
        let mut term = Mat3::IDENTITY;
        let mut sum = Mat3::IDENTITY;
        for k in 1..60 {
            term = term * *m * (1.0 / k as f64);
            sum = sum + term;
        }
        sum
    }

    #[test]
    fn hat_examples() {
        let h = hat(Vec3::E3);
        assert_eq!(h, Mat3([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]));
        assert_eq!(hat(Vec3::ZERO), Mat3::ZERO);
        let w = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(hat(w) * w, Vec3::ZERO);
        let x = Vec3::new(-0.3, 0.7, 2.0);
        assert!((hat(w) * x - w.cross(x)).max_abs() < 1e-15);
        assert_eq!(vee(&hat(w)), w);
    }

    #[test]
    fn exp_rot_examples() {
        let r = exp_rot(Vec3::E3, PI / 2.0);
        assert!((r * Vec3::E1 - Vec3::E2).max_abs() < 1e-12);
        let w = Vec3::new(1.0, -2.0, 0.5);
        assert_eq!(*exp_rot(w, 0.0).matrix(), Mat3::IDENTITY);
        let composed = exp_rot(w, 0.3) * exp_rot(w, 0.4);
        let oracle = series_exp(&(hat(w) * 0.7));
        assert!(close_m(composed.matrix(), &oracle, 1e-12));
        assert!(close_m(exp_rot(w, 0.7).matrix(), &oracle, 1e-12));
    }

    #[test]
    fn exp_rot_small_angle_matches_series() {
        let w = Vec3::new(3e-8, -1e-8, 2e-8);
        let r = exp_rot(w, 1.3);
        assert!(close_m(r.matrix(), &series_exp(&(hat(w) * 1.3)), 1e-16));
    }

    #[test]
    fn orthonormalize_fixed_point_and_perturbation() {
        let r = exp_rot(Vec3::new(0.3, -1.1, 0.4), 1.7);
        let back = orthonormalize(r.matrix()).unwrap();
        assert!(close_m(back.matrix(), r.matrix(), 1e-15));

        let p = Mat3([[1e-6, -0.4e-6, 0.2e-6], [0.7e-6, -0.3e-6, 0.9e-6], [0.1e-6, 0.5e-6, -0.8e-6]]);
        let m = Mat3::IDENTITY + p;
        let q = orthonormalize(&m).unwrap();
        // SVD oracle: polar factor U Vᵀ
        let nm = nalgebra::Matrix3::from_row_slice(&m.to_flat());
        let svd = nm.svd(true, true);
        let polar = svd.u.unwrap() * svd.v_t.unwrap();
        let flat: Vec<f64> = polar.transpose().iter().copied().collect();
        assert!(close_m(q.matrix(), &Mat3::from_flat(&flat), 1e-14));
        assert!((*q.matrix() - Mat3::IDENTITY).max_abs() < 2e-6);
    }

    #[test]
    fn orthonormalize_rejects_reflection() {
        let m = Mat3::diag(Vec3::new(1.0, 1.0, -1.0));
        assert!(matches!(orthonormalize(&m), Err(Error::NonOrientable { .. })));
        assert!(orthonormalize(&Mat3::ZERO).is_err());
    }

    #[test]
    fn inverse_and_det() {
        let m = Mat3([[2.0, 1.0, 0.0], [0.5, 3.0, -1.0], [0.0, 0.2, 1.5]]);
        let inv = m.inverse().unwrap();
        assert!(close_m(&(m * inv), &Mat3::IDENTITY, 1e-14));
        assert!((m.det() - (2.0 * (4.5 + 0.2) - 1.0 * 0.75)).abs() < 1e-14);
    }
}
