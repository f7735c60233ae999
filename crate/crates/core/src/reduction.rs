//! Reduction to horizontal moment, the pencil polynomial, the wedge map to the
//! Euclidean algebra and the symmetric-matrix formulation.

use crate::error::{Error, Result};
use crate::model::{BodyParams, ExtendedState, LevelData};
use crate::vecrot::{Mat3, Rotation, Vec3};
use serde::{Deserialize, Serialize};

/// The level values f = (1, j₃, ‖j‖², 1/ρ, 0, 2T).
pub fn level_values(params: &BodyParams, level: &LevelData) -> [f64; 6] {
    level.f_levels(params.rho())
}

/// The Gram matrices F = [[f₁,f₂],[f₂,f₃]] and G = [[f₄,f₅],[f₅,f₆]].
pub fn gram_pair(f: &[f64; 6]) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    ([[f[0], f[1]], [f[1], f[2]]], [[f[3], f[4]], [f[4], f[5]]])
}

/// p(λ) = det(G − λF) = αλ² − βλ + γ_p.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pencil {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub discriminant: f64,
    /// Real roots in increasing order, when α ≠ 0 and Δ ≥ 0.
    pub roots: Option<[f64; 2]>,
    pub degenerate: bool,
}

impl Pencil {
    pub fn eval(&self, lambda: f64) -> f64 {
        self.alpha * lambda * lambda - self.beta * lambda + self.gamma
    }
}

pub fn pencil(f: &[f64; 6]) -> Pencil {
    let alpha = f[0] * f[2] - f[1] * f[1];
    let beta = f[0] * f[5] + f[2] * f[3] - 2.0 * f[1] * f[4];
    let gamma = f[3] * f[5] - f[4] * f[4];
    let disc = beta * beta - 4.0 * alpha * gamma;
    let degenerate = alpha == 0.0;
    let roots = if degenerate || disc < 0.0 {
        None
    } else {
        // stable quadratic formula
        let s = disc.sqrt();
        let q = 0.5 * (beta + beta.signum() * s);
        let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / alpha, gamma / q) };
        Some(if r1 <= r2 { [r1, r2] } else { [r2, r1] })
    };
    Pencil { alpha, beta, gamma, discriminant: disc, roots, degenerate }
}

/// Choice of which pencil root becomes 1/ρ̃.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// 1/ρ̃ is the smaller root, so f̃₄ ≤ f̃₆/f̃₃.
    #[default]
    Plus,
    /// 1/ρ̃ is the root that tends to 1/ρ as j₃ → 0.
    Continuous,
}

/// A linear substitution (u;v) = M(ũ;ṽ), det M = 1, carrying the level to
/// one with horizontal moment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizontalReduction {
    pub branch: Branch,
    /// M = [[a, b], [c, d]].
    pub coeffs: [f64; 4],
    pub f: [f64; 6],
    pub f_tilde: [f64; 6],
    pub rho_tilde: f64,
    pub inertia_tilde: Vec3,
    pub energy_tilde: f64,
    pub j_tilde: Vec3,
    /// Whether Ĩ has positive entries.
    pub physical: bool,
    pub radius: f64,
}

impl HorizontalReduction {
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let [a, b, c, d] = self.coeffs;
        [[a, b], [c, d]]
    }

    /// Reduced body: J is unchanged and ρ̃ replaces ρ.
    pub fn params_tilde(&self) -> BodyParams {
        BodyParams::formal(self.inertia_tilde, self.rho_tilde, self.radius)
    }

    pub fn level_tilde(&self) -> LevelData {
        LevelData::new(self.j_tilde, self.energy_tilde)
    }

    /// (ũ;ṽ) = M⁻¹(u;v) and the same for (z, ζ).
    pub fn map_extended(&self, x: &ExtendedState) -> ExtendedState {
        let [a, b, c, d] = self.coeffs;
        ExtendedState {
            u: x.u * d - x.v * b,
            v: x.v * a - x.u * c,
            z: d * x.z - b * x.zeta,
            zeta: a * x.zeta - c * x.z,
        }
    }

    /// Inverse of [`Self::map_extended`].
    pub fn unmap_extended(&self, x: &ExtendedState) -> ExtendedState {
        let [a, b, c, d] = self.coeffs;
        ExtendedState {
            u: x.u * a + x.v * b,
            v: x.u * c + x.v * d,
            z: a * x.z + b * x.zeta,
            zeta: c * x.z + d * x.zeta,
        }
    }
}

fn mat2_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    m
}

fn mat2_t(a: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

/// M X Mᵀ for 2×2 matrices.
pub fn congruence(m: [[f64; 2]; 2], x: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    mat2_mul(mat2_mul(m, x), mat2_t(m))
}

/// Moment-reduction with the default branch.
pub fn horizontalize(params: &BodyParams, level: &LevelData) -> Result<HorizontalReduction> {
    horizontalize_with(params, level, Branch::Plus)
}

pub fn horizontalize_with(params: &BodyParams, level: &LevelData, branch: Branch) -> Result<HorizontalReduction> {
    let j = level.j;
    if level.is_vertical() {
        return Err(Error::Precondition("vertical moment: no horizontal reduction exists".into()));
    }
    let f = level_values(params, level);
    let pen = pencil(&f);
    if pen.discriminant <= 0.0 {
        return Err(Error::Precondition(format!(
            "pencil discriminant {:e} is not positive",
            pen.discriminant
        )));
    }
    let rho = params.rho();
    let jh = Vec3::new(j[0], j[1], 0.0);
    if level.is_horizontal() {
        return Ok(HorizontalReduction {
            branch,
            coeffs: [1.0, 0.0, 0.0, 1.0],
            f,
            f_tilde: f,
            rho_tilde: rho,
            inertia_tilde: params.inertia(),
            energy_tilde: level.energy,
            j_tilde: j,
            physical: params.is_physical(),
            radius: params.radius(),
        });
    }
    let [lo, hi] = pen.roots.expect("positive discriminant gives real roots");
    let inv_rho_tilde = match branch {
        Branch::Plus => lo,
        Branch::Continuous => {
            if level.energy - f[2] / (2.0 * rho) < 0.0 {
                hi
            } else {
                lo
            }
        }
    };
    let other = if inv_rho_tilde == lo { hi } else { lo };
    let (fm, gm) = gram_pair(&f);
    let det_f = pen.alpha;
    // Cholesky factor F = L Lᵀ
    let l11 = fm[0][0].sqrt();
    let l21 = fm[1][0] / l11;
    let l22 = (det_f / fm[0][0]).sqrt();
    let l = [[l11, 0.0], [l21, l22]];
    let linv = [[1.0 / l11, 0.0], [-l21 / (l11 * l22), 1.0 / l22]];
    let c = congruence(linv, gm);
    // eigenvector of the symmetric C for the eigenvalue 1/ρ̃
    let e1 = eigvec_sym2(c, inv_rho_tilde, other);
    let o = [[e1[0], -e1[1]], [e1[1], e1[0]]];
    let binv = [[1.0, 0.0], [0.0, 1.0 / det_f.sqrt()]];
    let mut m = mat2_mul(mat2_mul(l, o), binv);
    let det_m = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det_m < 0.0 {
        m[0][1] = -m[0][1];
        m[1][1] = -m[1][1];
    }
    let minv = {
        let dm = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        [[m[1][1] / dm, -m[0][1] / dm], [-m[1][0] / dm, m[0][0] / dm]]
    };
    let ft = congruence(minv, fm);
    let gt = congruence(minv, gm);
    let f_tilde = [ft[0][0], ft[0][1], ft[1][1], gt[0][0], gt[0][1], gt[1][1]];
    let rho_tilde = 1.0 / inv_rho_tilde;
    let energy_tilde = 0.5 * other * det_f;
    let inertia_tilde = params.i_plus_rho().map(|x| x - rho_tilde);
    Ok(HorizontalReduction {
        branch,
        coeffs: [m[0][0], m[0][1], m[1][0], m[1][1]],
        f,
        f_tilde,
        rho_tilde,
        inertia_tilde,
        energy_tilde,
        j_tilde: jh,
        physical: inertia_tilde.0.iter().all(|&x| x > 0.0) && rho_tilde > 0.0,
        radius: params.radius(),
    })
}

/// Unit eigenvector of a symmetric 2×2 matrix for eigenvalue `lam`, `other`
/// being the second eigenvalue.
fn eigvec_sym2(c: [[f64; 2]; 2], lam: f64, other: f64) -> [f64; 2] {
    // rows of C − λ are orthogonal to the eigenvector; use the larger one
    let r0 = [c[0][0] - lam, c[0][1]];
    let r1 = [c[1][0], c[1][1] - lam];
    let n0 = r0[0].hypot(r0[1]);
    let n1 = r1[0].hypot(r1[1]);
    let r = if n0 >= n1 { r0 } else { r1 };
    let n = n0.max(n1);
    if n <= 1e-300 || (lam - other).abs() == 0.0 {
        return [1.0, 0.0];
    }
    [-r[1] / n, r[0] / n]
}

/// q = u×v, r = zv − ζu.
pub fn wedge(x: &ExtendedState) -> (Vec3, Vec3) {
    (x.u.cross(x.v), x.v * x.z - x.u * x.zeta)
}

/// The h-values predicted from the f-values of an extended state.
pub fn h_from_f(f: &[f64; 6], params: &BodyParams) -> [f64; 4] {
    let h1 = f[0] * f[2] - f[1] * f[1];
    let h3 = f[3] * f[5] - f[4] * f[4];
    let h4 = f[0] * f[5] + f[2] * f[3] - 2.0 * f[1] * f[4] - params.j_diag().sum() * h1;
    [h1, 0.0, h3, h4]
}

/// Traces of Bⁱ and the residual of the kinetic equation in B.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BReport {
    pub traces: [f64; 3],
    pub tb_residual: f64,
}

/// trace Bⁱ for i = 1, 2, 3.
pub fn b_traces(b: &Mat3) -> [f64; 3] {
    let b2 = *b * *b;
    [b.trace(), b2.trace(), (b2 * *b).trace()]
}

/// B = A(I+ρ)⁻¹A⁻¹ with its invariant report at the level {j, T}.
pub fn b_matrix(a: &Rotation, params: &BodyParams, level: &LevelData) -> (Mat3, BReport) {
    let m = *a.matrix();
    let b = m * params.j_mat() * m.transpose();
    let j = level.j;
    let bj = b * j;
    let res = bj[2].powi(2) - (1.0 / params.rho() - b[(2, 2)]) * (2.0 * level.energy - bj.dot(j));
    (b, BReport { traces: b_traces(&b), tb_residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{e3_fields, f_invariants, h_invariants, xi_ext, eta_ext};
    use crate::model::{extend, sample_level_pair, PairState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stb() -> BodyParams {
        BodyParams::stb()
    }

    fn shr_ext() -> ExtendedState {
        let pair = PairState { u: Vec3::E2, v: Vec3::new(2.4f64.sqrt(), 0.0, 1.6f64.sqrt()) };
        extend(&pair, 0.8, &stb(), 1.0).unwrap()
    }

    fn max_abs2(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> f64 {
        (0..4).map(|k| (a[k / 2][k % 2] - b[k / 2][k % 2]).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn pencil_examples() {
        let p = pencil(&[1.0, 0.0, 4.0, 1.0, 0.0, 1.6]);
        assert_eq!((p.alpha, p.beta, p.gamma), (4.0, 5.6, 1.6));
        assert!((p.discriminant - 5.76).abs() < 1e-12);
        let r = p.roots.unwrap();
        assert!((r[0] - 0.4).abs() < 1e-12 && (r[1] - 1.0).abs() < 1e-12);
        let q = pencil(&[1.0, 0.0, 1.0, 1.0, 0.0, 1.0]);
        assert_eq!(q.discriminant, 0.0);
        assert_eq!((q.eval(0.0), q.eval(1.0), q.eval(3.0)), (1.0, 0.0, 4.0));
        assert!(pencil(&[0.0, 0.0, 1.0, 1.0, 0.0, 1.0]).degenerate);
    }

    #[test]
    fn pencil_roots_avoid_j() {
        let r = pencil(&level_values(&stb(), &LevelData::shr())).roots.unwrap();
        for ji in stb().j_diag().0 {
            assert!(r.iter().all(|x| (x - ji).abs() > 1e-3));
        }
    }

    #[test]
    fn horizontalize_examples() {
        let p = stb();
        let shr = horizontalize(&p, &LevelData::shr()).unwrap();
        assert_eq!(shr.coeffs, [1.0, 0.0, 0.0, 1.0]);
        assert_eq!((shr.energy_tilde, shr.rho_tilde), (0.8, 1.0));

        let level = LevelData::new(Vec3::new(2.0, 0.0, 1.0), 1.0);
        let red = horizontalize(&p, &level).unwrap();
        let expect = (3.5 + 4.25f64.sqrt()) / 2.0;
        assert!((red.energy_tilde - expect).abs() < 1e-12);
        assert!((red.energy_tilde - 2.780776).abs() < 1e-6);
        assert!((red.rho_tilde - 2.780776).abs() < 1e-6);
        assert!((red.j_tilde.norm2() - 4.0).abs() < 1e-15);
        assert!((red.energy_tilde / red.rho_tilde - level.energy / p.rho()).abs() < 1e-12);
        assert!(!red.physical);

        let cont = horizontalize_with(&p, &level, Branch::Continuous).unwrap();
        assert!((cont.energy_tilde - 0.719224).abs() < 1e-6);
        assert!(cont.physical);
        assert!(horizontalize(&p, &LevelData::new(Vec3::new(0.0, 0.0, 3.0), 1.5)).is_err());
    }

    #[test]
    fn reduction_matrix_identities() {
        let p = stb();
        for (j, t, branch) in [
            (Vec3::new(2.0, 0.0, 1.0), 1.0, Branch::Plus),
            (Vec3::new(2.0, 0.0, 1.0), 1.0, Branch::Continuous),
            (Vec3::new(0.6, -1.3, -0.8), 0.7, Branch::Plus),
            (Vec3::new(0.6, -1.3, -0.8), 0.7, Branch::Continuous),
        ] {
            let red = horizontalize_with(&p, &LevelData::new(j, t), branch).unwrap();
            let m = red.matrix();
            assert!((m[0][0] * m[1][1] - m[0][1] * m[1][0] - 1.0).abs() < 1e-12);
            let (fm, gm) = gram_pair(&red.f);
            let (ft, gt) = gram_pair(&red.f_tilde);
            assert!(max_abs2(congruence(m, ft), fm) < 1e-12);
            assert!(max_abs2(congruence(m, gt), gm) < 1e-12);
            let ft_expect = level_values(&red.params_tilde(), &red.level_tilde());
            for k in 0..6 {
                assert!((red.f_tilde[k] - ft_expect[k]).abs() < 1e-12, "{:?} vs {ft_expect:?}", red.f_tilde);
            }
            let (p0, p1) = (pencil(&red.f), pencil(&red.f_tilde));
            assert!((p0.alpha - p1.alpha).abs() < 1e-12);
            assert!((p0.beta - p1.beta).abs() < 1e-12);
            assert!((p0.gamma - p1.gamma).abs() < 1e-12);
        }
    }

    #[test]
    fn reduction_maps_level_points() {
        let p = stb();
        let level = LevelData::new(Vec3::new(0.6, -1.3, -0.8), 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for branch in [Branch::Plus, Branch::Continuous] {
            let red = horizontalize_with(&p, &level, branch).unwrap();
            for _ in 0..20 {
                let pair = sample_level_pair(&p, &level, &mut rng).unwrap();
                let x = extend(&pair, level.energy, &p, 1.0).unwrap();
                let y = red.map_extended(&x);
                let got = f_invariants(&y, &red.params_tilde());
                for k in 0..6 {
                    assert!((got[k] - red.f_tilde[k]).abs() < 1e-10);
                }
                let back = red.unmap_extended(&y).to_flat();
                assert!(back.iter().zip(x.to_flat()).all(|(a, b)| (a - b).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn wedge_examples() {
        let x = ExtendedState { u: Vec3::E1, v: Vec3::E2, z: 1.0, zeta: 0.0 };
        assert_eq!(wedge(&x), (Vec3::E3, Vec3::E2));
        let (q, r) = wedge(&shr_ext());
        assert!((q - Vec3::new(1.264911, 0.0, -1.549193)).max_abs() < 1e-6);
        assert!((r - Vec3::new(1.264911, 0.0, 1.032796)).max_abs() < 1e-6);
        assert!(q.dot(r).abs() < 1e-15);
        let y = ExtendedState { u: Vec3::new(0.3, -0.2, 0.9), v: Vec3::new(1.1, 0.4, -0.5), z: 0.7, zeta: -0.3 };
        let s = ExtendedState { u: y.v, v: y.u, z: y.zeta, zeta: y.z };
        let ((q1, r1), (q2, r2)) = (wedge(&y), wedge(&s));
        assert!((q1 + q2).max_abs() < 1e-15 && (r1 + r2).max_abs() < 1e-15);
    }

    #[test]
    fn h_from_f_examples() {
        let p = stb();
        let h = h_from_f(&[1.0, 0.0, 4.0, 1.0, 0.0, 1.6], &p);
        assert_eq!(&h[..3], &[4.0, 0.0, 1.6]);
        assert!((h[3] - (5.6 - 13.0 / 12.0 * 4.0)).abs() < 1e-15);
        assert!((h[3] - 1.266667).abs() < 1e-6);
        assert_eq!(h_from_f(&[0.0; 6], &p), [0.0; 4]);
        let (q, r) = wedge(&shr_ext());
        let hi = h_invariants(q, r, &p);
        assert!((hi[0] - 4.0).abs() < 1e-14 && hi[1].abs() < 1e-14 && (hi[2] - 1.6).abs() < 1e-14);
        assert!((p.j_diag().sum() * hi[0] + hi[3] - 5.6).abs() < 1e-14);
    }

    #[test]
    fn h_from_f_matches_composition() {
        let p = stb();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for level in [LevelData::shr(), LevelData::new(Vec3::new(2.0, 0.0, 1.0), 1.0)] {
            for _ in 0..50 {
                let pair = sample_level_pair(&p, &level, &mut rng).unwrap();
                let x = extend(&pair, level.energy, &p, 1.0).unwrap();
                let (q, r) = wedge(&x);
                let a = h_from_f(&f_invariants(&x, &p), &p);
                let b = h_invariants(q, r, &p);
                for k in 0..4 {
                    assert!((a[k] - b[k]).abs() < 1e-12, "{a:?} {b:?}");
                }
            }
        }
    }

    #[test]
    fn wedge_intertwines_fields() {
        let p = stb();
        let x = ExtendedState { u: Vec3::new(0.3, -0.5, 0.8), v: Vec3::new(1.0, 0.2, -0.7), z: 0.6, zeta: -0.9 };
        let (q, r) = wedge(&x);
        let (xi, eta) = e3_fields(q, r, &p);
        // wedge is quadratic, so a central difference of any step is exact up to roundoff
        let h = 1e-2;
        for (d, target) in [(xi_ext(&x, &p), xi), (eta_ext(&x, &p), eta)] {
            let step = |s: f64| {
                let y = ExtendedState::from_flat(
                    &x.to_flat().iter().zip(d.to_flat()).map(|(a, b)| a + s * b).collect::<Vec<_>>(),
                );
                wedge(&y)
            };
            let ((qp, rp), (qm, rm)) = (step(h), step(-h));
            let dq = (qp - qm) * (0.5 / h);
            let dr = (rp - rm) * (0.5 / h);
            assert!((dq - target.0).max_abs() < 1e-12 && (dr - target.1).max_abs() < 1e-12);
        }
    }

    #[test]
    fn b_matrix_examples() {
        let p = stb();
        let (b, rep) = b_matrix(&Rotation::IDENTITY, &p, &LevelData::new(Vec3::new(2.0, 0.0, 0.0), 1.0));
        assert_eq!(b, Mat3::diag(Vec3::new(0.5, 1.0 / 3.0, 0.25)));
        assert!((rep.traces[0] - 13.0 / 12.0).abs() < 1e-15);
        assert!((rep.traces[1] - (0.25 + 1.0 / 9.0 + 1.0 / 16.0)).abs() < 1e-15);
        assert!((rep.traces[1] - 0.423611).abs() < 1e-6);
        assert!((rep.traces[2] - (0.125 + 1.0 / 27.0 + 1.0 / 64.0)).abs() < 1e-15);
        assert!((rep.traces[2] - 0.177662).abs() < 1e-6);
        assert!(rep.tb_residual.abs() < 1e-15);
    }
}
