//! Tangent lines and quadrics: on a level (j, T) the line through u in the
//! direction αj₃u − (ρ⁻¹+α)v touches the quadric ⟨x,(J+α)x⟩ = ρ⁻¹ + α for
//! each root α of the level's discriminant quadratic.

use crate::error::{Error, Result};
use crate::model::{BodyParams, LevelData};
use crate::vecrot::{Rotation, Vec3};
use serde::{Deserialize, Serialize};

/// How the line of a root is anchored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    /// Through u with direction αj₃u − (ρ⁻¹+α)v.
    Generic,
    /// Horizontal j with α = −1/ρ: through −v with direction u.
    Polar,
}

/// One root α with its quadric ⟨x, diag(q)x⟩ = k.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencyRoot {
    pub re: f64,
    pub im: f64,
    /// Diagonal of J + α, present for real roots.
    pub quadric: Option<Vec3>,
    pub level: f64,
    pub line: LineKind,
}

impl TangencyRoot {
    pub fn is_real(&self) -> bool {
        self.im == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencyData {
    pub roots: [TangencyRoot; 2],
    pub j3: f64,
    pub rho_inv: f64,
    pub horizontal: bool,
}

impl TangencyData {
    /// Line base point and direction of root `k` at (u, v); `None` for a
    /// complex root.
    pub fn line(&self, k: usize, u: Vec3, v: Vec3) -> Option<(Vec3, Vec3)> {
        let r = &self.roots[k];
        if !r.is_real() {
            return None;
        }
        Some(match r.line {
            LineKind::Generic => (u, u * (r.re * self.j3) - v * (self.rho_inv + r.re)),
            LineKind::Polar => (-v, u),
        })
    }
}

/// Discriminant quadratic (‖j‖²−j₃²)α² + (2T+‖j‖²/ρ)α + 2T/ρ and its roots.
pub fn tangency_data(params: &BodyParams, j: Vec3, energy: f64) -> Result<TangencyData> {
    let level = LevelData::new(j, energy);
    if level.is_vertical() {
        return Err(Error::Precondition("vertical moment: the discriminant quadratic degenerates".into()));
    }
    let rho = params.rho();
    let jd = params.j_diag();
    let jn2 = level.j_norm2();
    let horizontal = level.is_horizontal();
    let mk = |re: f64, im: f64, line: LineKind| {
        if im != 0.0 {
            return TangencyRoot { re, im, quadric: None, level: f64::NAN, line };
        }
        match line {
            LineKind::Generic => TangencyRoot { re, im, quadric: Some(jd.map(|x| x + re)), level: 1.0 / rho + re, line },
            LineKind::Polar => TangencyRoot {
                re,
                im,
                quadric: Some(jd.map(|x| x - 1.0 / rho)),
                level: 2.0 * energy - jn2 / rho,
                line,
            },
        }
    };
    let roots = if horizontal {
        [mk(-2.0 * energy / jn2, 0.0, LineKind::Generic), mk(-1.0 / rho, 0.0, LineKind::Polar)]
    } else {
        let a = jn2 - j[2] * j[2];
        let b = 2.0 * energy + jn2 / rho;
        let c = 2.0 * energy / rho;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            let (r1, r2) = (q / a, c / q);
            [mk(r1.max(r2), 0.0, LineKind::Generic), mk(r1.min(r2), 0.0, LineKind::Generic)]
        } else {
            let (re, im) = (-b / (2.0 * a), (-disc).sqrt() / (2.0 * a));
            [mk(re, im, LineKind::Generic), mk(re, -im, LineKind::Generic)]
        }
    };
    Ok(TangencyData { roots, j3: j[2], rho_inv: 1.0 / rho, horizontal })
}

/// b² − ac for the intersection a s² + 2b s + c = 0 of the line of root α at
/// the state A with its quadric; zero exactly at tangency.
pub fn tangency_residual(a: &Rotation, alpha: f64, params: &BodyParams, j: Vec3, energy: f64) -> f64 {
    let u = a.inv_apply(Vec3::E3);
    let v = a.inv_apply(j);
    let rho = params.rho();
    let horizontal = LevelData::new(j, energy).is_horizontal();
    let jd = params.j_diag();
    let (base, dir, q, k) = if horizontal && (alpha + 1.0 / rho).abs() <= 1e-12 * (1.0 + alpha.abs()) {
        (-v, u, jd.map(|x| x - 1.0 / rho), 2.0 * energy - j.norm2() / rho)
    } else {
        (u, u * (alpha * j[2]) - v * (1.0 / rho + alpha), jd.map(|x| x + alpha), 1.0 / rho + alpha)
    };
    let qa = dir.dot(q.hadamard(dir));
    let qb = base.dot(q.hadamard(dir));
    let qc = base.dot(q.hadamard(base)) - k;
    qb * qb - qa * qc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_rotation, sample_level_state};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn root_examples() {
        let p = BodyParams::stb();
        let t = tangency_data(&p, Vec3::new(2.0, 0.0, 1.0), 1.0).unwrap();
        let s = 17f64.sqrt();
        assert!((t.roots[0].re - (-7.0 + s) / 8.0).abs() < 1e-15);
        assert!((t.roots[1].re - (-7.0 - s) / 8.0).abs() < 1e-15);
        for r in &t.roots {
            assert!((4.0 * r.re * r.re + 7.0 * r.re + 2.0).abs() < 1e-14);
        }
        let t = tangency_data(&p, Vec3::new(2.0, 0.0, 0.0), 0.8).unwrap();
        assert!(t.horizontal);
        assert!((t.roots[0].re + 0.4).abs() < 1e-15 && t.roots[1].re == -1.0);
        assert!(tangency_data(&p, Vec3::new(0.0, 0.0, 3.0), 1.0).is_err());
    }

    #[test]
    fn roots_are_real_for_real_levels() {
        // b² − 4ac ≥ (2T − ‖j‖²/ρ)² whenever 0 ≤ a ≤ ‖j‖²
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let rho = rng.gen_range(-5.0..5.0);
            let p = BodyParams::formal(Vec3::new(1.0, 2.0, 3.0), rho, 1.0);
            let j = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.1..2.0));
            let t = tangency_data(&p, j, rng.gen_range(-3.0..3.0)).unwrap();
            assert!(t.roots.iter().all(TangencyRoot::is_real));
        }
    }

    #[test]
    fn tangency_on_level_points() {
        let p = BodyParams::stb();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (j, e) in [(Vec3::new(2.0, 0.0, 1.0), 1.0), (Vec3::new(2.0, 0.0, 0.0), 0.8), (Vec3::new(1.0, -0.5, 0.7), 0.5)] {
            let level = LevelData::new(j, e);
            let td = tangency_data(&p, j, e).unwrap();
            for _ in 0..50 {
                let s = sample_level_state(&p, &level, &mut rng).unwrap();
                let (u, v) = (s.u(), s.a.inv_apply(j));
                for r in &td.roots {
                    let res = tangency_residual(&s.a, r.re, &p, j, e);
                    assert!(res.abs() < 1e-12, "{res}");
                }
                let (_, d1) = td.line(0, u, v).unwrap();
                let (_, d2) = td.line(1, u, v).unwrap();
                assert!(d1.dot(d2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn off_level_residual_is_order_one() {
        let p = BodyParams::stb();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let j = Vec3::new(2.0, 0.0, 1.0);
        let td = tangency_data(&p, j, 1.0).unwrap();
        let worst = (0..20)
            .map(|_| tangency_residual(&random_rotation(&mut rng), td.roots[0].re, &p, j, 1.0).abs())
            .fold(0.0, f64::max);
        assert!(worst > 1e-2);
    }
}
