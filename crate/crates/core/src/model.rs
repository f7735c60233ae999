//! Body parameters, state representations, kinetic forms and constants of motion.

use crate::error::{Error, Result};
use crate::vecrot::{Mat3, Rotation, Vec3};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Principal moments, mass and radius of the sphere, with ρ = m r².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    inertia: Vec3,
    mass: f64,
    radius: f64,
    rho: f64,
}

impl BodyParams {
    pub fn new(inertia: Vec3, mass: f64, radius: f64) -> Result<BodyParams> {
        if !(inertia.0.iter().all(|&i| i > 0.0 && i.is_finite())) {
            return Err(Error::Precondition(format!(
                "principal moments must be positive, got {:?}",
                inertia.0
            )));
        }
        if !(mass > 0.0 && mass.is_finite()) || !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Precondition(format!(
                "mass and radius must be positive, got m = {mass}, r = {radius}"
            )));
        }
        Ok(BodyParams { inertia, mass, radius, rho: mass * radius * radius })
    }

    /// The standard test body: I = diag(1, 2, 3), m = 1, r = 1.
    pub fn stb() -> BodyParams {
        BodyParams::new(Vec3::new(1.0, 2.0, 3.0), 1.0, 1.0).unwrap()
    }

    /// Algebraic parameters that need not describe a physical body.
    ///
    /// Used for the output of the horizontal reduction, where I + ρ is kept and
    /// ρ changes, so individual moments may become non-positive.
    pub fn formal(inertia: Vec3, rho: f64, radius: f64) -> BodyParams {
        BodyParams { inertia, mass: rho / (radius * radius), radius, rho }
    }

    pub fn inertia(&self) -> Vec3 {
        self.inertia
    }
    pub fn mass(&self) -> f64 {
        self.mass
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Diagonal of I + ρ.
    pub fn i_plus_rho(&self) -> Vec3 {
        self.inertia.map(|i| i + self.rho)
    }

    /// Diagonal of J = (I + ρ)⁻¹.
    pub fn j_diag(&self) -> Vec3 {
        self.inertia.map(|i| 1.0 / (i + self.rho))
    }

    /// Diagonal of the cofactor matrix diag(J₂J₃, J₃J₁, J₁J₂).
    pub fn j_co(&self) -> Vec3 {
        let j = self.j_diag();
        Vec3::new(j[1] * j[2], j[2] * j[0], j[0] * j[1])
    }

    pub fn j_mat(&self) -> Mat3 {
        Mat3::diag(self.j_diag())
    }

    pub fn is_physical(&self) -> bool {
        self.inertia.0.iter().all(|&i| i > 0.0) && self.rho > 0.0
    }

    pub fn is_spherical(&self) -> bool {
        let i = self.inertia;
        i[0] == i[1] && i[1] == i[2]
    }
}

/// Rotation, body angular velocity and horizontal contact point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub a: Rotation,
    pub omega: Vec3,
    pub p: Vec3,
}

impl FullState {
    pub fn new(a: Rotation, omega: Vec3) -> FullState {
        FullState { a, omega, p: Vec3::ZERO }
    }

    /// u = A⁻¹e₃, the upward vertical seen from the body.
    pub fn u(&self) -> Vec3 {
        self.a.inv_apply(Vec3::E3)
    }
}

/// The pair (u, v) = (A⁻¹e₃, A⁻¹j).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairState {
    pub u: Vec3,
    pub v: Vec3,
}

impl PairState {
    pub fn to_flat(&self) -> [f64; 6] {
        let (u, v) = (self.u.0, self.v.0);
        [u[0], u[1], u[2], v[0], v[1], v[2]]
    }

    pub fn from_flat(y: &[f64]) -> PairState {
        PairState { u: Vec3::from_slice(&y[0..3]), v: Vec3::from_slice(&y[3..6]) }
    }

    /// Residuals of ⟨u,u⟩ = 1, ⟨u,v⟩ = j₃, ⟨v,v⟩ = ‖j‖².
    pub fn gram_residuals(&self, j: Vec3) -> [f64; 3] {
        [
            self.u.norm2() - 1.0,
            self.u.dot(self.v) - j[2],
            self.v.norm2() - j.norm2(),
        ]
    }
}

/// The pair extended by z = ±√X(u) and ζ with Y = −zζ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedState {
    pub u: Vec3,
    pub v: Vec3,
    pub z: f64,
    pub zeta: f64,
}

impl ExtendedState {
    pub fn to_flat(&self) -> [f64; 8] {
        let (u, v) = (self.u.0, self.v.0);
        [u[0], u[1], u[2], v[0], v[1], v[2], self.z, self.zeta]
    }

    pub fn from_flat(y: &[f64]) -> ExtendedState {
        ExtendedState {
            u: Vec3::from_slice(&y[0..3]),
            v: Vec3::from_slice(&y[3..6]),
            z: y[6],
            zeta: y[7],
        }
    }

    pub fn pair(&self) -> PairState {
        PairState { u: self.u, v: self.v }
    }

    pub fn scaled(&self, c: f64) -> ExtendedState {
        ExtendedState { u: self.u * c, v: self.v * c, z: self.z * c, zeta: self.zeta * c }
    }
}

/// Values of the constants of motion j and T.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelData {
    pub j: Vec3,
    pub energy: f64,
}

impl LevelData {
    pub fn new(j: Vec3, energy: f64) -> LevelData {
        LevelData { j, energy }
    }

    /// The horizontal reference level j = (2, 0, 0), T = 0.8.
    pub fn shr() -> LevelData {
        LevelData::new(Vec3::new(2.0, 0.0, 0.0), 0.8)
    }

    pub fn j3(&self) -> f64 {
        self.j[2]
    }

    pub fn j_norm2(&self) -> f64 {
        self.j.norm2()
    }

    /// τ = 2T/‖j‖².
    pub fn tau(&self) -> f64 {
        2.0 * self.energy / self.j_norm2()
    }

    /// γ = τ/(1 − τρ).
    pub fn gamma(&self, rho: f64) -> f64 {
        let t = self.tau();
        t / (1.0 - t * rho)
    }

    pub fn horizontal_norm2(&self) -> f64 {
        self.j[0] * self.j[0] + self.j[1] * self.j[1]
    }

    /// ‖j − j₃e₃‖ ≤ 1e−10‖j‖.
    pub fn is_vertical(&self) -> bool {
        self.horizontal_norm2().sqrt() <= 1e-10 * self.j.norm()
    }

    /// |j₃| ≤ 1e−10‖j‖.
    pub fn is_horizontal(&self) -> bool {
        self.j3().abs() <= 1e-10 * self.j.norm()
    }

    /// The six level values (1, j₃, ‖j‖², 1/ρ, 0, 2T).
    pub fn f_levels(&self, rho: f64) -> [f64; 6] {
        [1.0, self.j3(), self.j_norm2(), 1.0 / rho, 0.0, 2.0 * self.energy]
    }
}

/// The quadratic forms X, Y, Z and f = Y² − XZ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KineticForms {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub f: f64,
}

pub fn kinetic_forms(u: Vec3, v: Vec3, energy: f64, params: &BodyParams) -> KineticForms {
    let j = params.j_diag();
    let x = 1.0 / params.rho() - u.dot(j.hadamard(u));
    let y = u.dot(j.hadamard(v));
    let z = 2.0 * energy - v.dot(j.hadamard(v));
    KineticForms { x, y, z, f: y * y - x * z }
}

/// X(u) = ρ⁻¹ − ⟨u, Ju⟩.
pub fn x_form(u: Vec3, params: &BodyParams) -> f64 {
    1.0 / params.rho() - u.dot(params.j_diag().hadamard(u))
}

const UNIT_TOL: f64 = 1e-9;

fn check_unit(u: Vec3) -> Result<()> {
    let n = u.norm();
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnit { norm: n });
    }
    Ok(())
}

/// (I + ρ)ω − ρ⟨u, ω⟩u without the unit check.
pub fn i_rho_u_raw(omega: Vec3, u: Vec3, params: &BodyParams) -> Vec3 {
    params.i_plus_rho().hadamard(omega) - u * (params.rho() * u.dot(omega))
}

pub fn i_rho_u(omega: Vec3, u: Vec3, params: &BodyParams) -> Result<Vec3> {
    check_unit(u)?;
    Ok(i_rho_u_raw(omega, u, params))
}

/// Jν + ρ⟨u, Jν⟩/(1 − ρ⟨u, Ju⟩)·Ju without checks.
pub fn i_rho_u_inv_raw(nu: Vec3, u: Vec3, params: &BodyParams) -> Vec3 {
    let j = params.j_diag();
    let ju = j.hadamard(u);
    let jn = j.hadamard(nu);
    let rho = params.rho();
    jn + ju * (rho * u.dot(jn) / (1.0 - rho * u.dot(ju)))
}

pub fn i_rho_u_inv(nu: Vec3, u: Vec3, params: &BodyParams) -> Result<Vec3> {
    check_unit(u)?;
    let den = 1.0 - params.rho() * u.dot(params.j_diag().hadamard(u));
    if den.abs() < 1e-14 {
        return Err(Error::VanishingDenominator("1 - rho <u, J u>"));
    }
    Ok(i_rho_u_inv_raw(nu, u, params))
}

/// ω determined by the pair (u, v).
pub fn omega_from_pair(u: Vec3, v: Vec3, params: &BodyParams) -> Result<Vec3> {
    i_rho_u_inv(v, u, params)
}

/// ω = Jv + (Y/X)Ju, valid as a formula on all of ℝ⁶.
pub fn omega_raw(u: Vec3, v: Vec3, params: &BodyParams) -> Vec3 {
    i_rho_u_inv_raw(v, u, params)
}

/// The moment about the contact point and the kinetic energy.
pub fn moment_and_energy(state: &FullState, params: &BodyParams) -> (Vec3, f64) {
    let u = state.u();
    let nu = i_rho_u_raw(state.omega, u, params);
    (*state.a.matrix() * nu, 0.5 * nu.dot(state.omega))
}

pub fn pair_from_full(a: &Rotation, j: Vec3) -> PairState {
    PairState { u: a.inv_apply(Vec3::E3), v: a.inv_apply(j) }
}

/// Extends a level pair by z = sign_z·√X(u) and ζ with Y = −zζ.
pub fn extend(pair: &PairState, energy: f64, params: &BodyParams, sign_z: f64) -> Result<ExtendedState> {
    let k = kinetic_forms(pair.u, pair.v, energy, params);
    let scale = 1.0f64.max(k.x.abs() * (2.0 * energy.abs() + (2.0 * energy - k.z).abs()));
    if k.f.abs() > 1e-9 * scale {
        return Err(Error::OffLevel { residual: k.f });
    }
    if k.x < 0.0 {
        return Err(Error::Precondition(format!("X(u) = {} < 0", k.x)));
    }
    let s = if sign_z < 0.0 { -1.0 } else { 1.0 };
    let z = s * k.x.sqrt();
    let zeta = if z != 0.0 {
        -k.y / z
    } else if k.z > 0.0 {
        s * k.z.sqrt()
    } else {
        return Err(Error::Ambiguous("z = 0 and Z = 0"));
    };
    Ok(ExtendedState { u: pair.u, v: pair.v, z, zeta })
}

/// Uniformly distributed rotation from a normalized Gaussian quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| gaussian(rng));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 1e-6 {
            continue;
        }
        let [w, x, y, z] = q.map(|c| c / n);
        let m = Mat3([
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]);
        return crate::vecrot::orthonormalize(&m).expect("quaternion matrix is a rotation");
    }
}

/// Standard normal sample by the Box–Muller transform.
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(gaussian(rng), gaussian(rng), gaussian(rng));
        if v.norm() > 1e-6 {
            return v.normalized();
        }
    }
}

/// Unit vector orthogonal to `u`.
pub fn orthogonal_unit(u: Vec3) -> Vec3 {
    let k = (0..3).min_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs())).unwrap();
    u.cross(Vec3::basis(k)).normalized()
}

/// The rotation A with A⁻¹e₃ = u and A⁻¹j = v.
///
/// For vertical j the rotation about e₃ is fixed by an arbitrary choice.
pub fn rotation_from_pair(pair: &PairState, j: Vec3) -> Result<Rotation> {
    let u = pair.u;
    let jh = Vec3::new(j[0], j[1], 0.0);
    let (w_body, w_space) = if jh.norm() > 1e-12 * j.norm().max(1e-300) {
        let wb = pair.v - u * j[2];
        (wb.normalized(), jh.normalized())
    } else {
        (orthogonal_unit(u), Vec3::E1)
    };
    let body = Mat3::from_cols(u, w_body, u.cross(w_body));
    let space = Mat3::from_cols(Vec3::E3, w_space, Vec3::E3.cross(w_space));
    Rotation::try_new(space * body.transpose(), 1e-9)
}

/// A random point (u, v) on the level {j, T}.
///
/// Draws u uniformly on the sphere, parameterizes the admissible v by the circle
/// ⟨u,v⟩ = j₃, ‖v‖ = ‖j‖ and solves f(u, v) = 0 on it by bracketing and
/// bisection. Directions u outside the projection of the level are redrawn.
pub fn sample_level_pair<R: Rng + ?Sized>(
    params: &BodyParams,
    level: &LevelData,
    rng: &mut R,
) -> Result<PairState> {
    let j3 = level.j3();
    let radius = level.horizontal_norm2().sqrt();
    for _ in 0..100_000 {
        let u = random_unit(rng);
        let e1 = orthogonal_unit(u);
        let e2 = u.cross(e1);
        let v_of = |th: f64| u * j3 + (e1 * th.cos() + e2 * th.sin()) * radius;
        let f_of = |th: f64| kinetic_forms(u, v_of(th), level.energy, params).f;
        const N: usize = 720;
        let step = 2.0 * std::f64::consts::PI / N as f64;
        let brackets: Vec<usize> = (0..N)
            .filter(|&k| f_of(k as f64 * step) * f_of((k + 1) as f64 * step) < 0.0)
            .collect();
        if brackets.is_empty() {
            continue;
        }
        let k = brackets[rng.gen_range(0..brackets.len())];
        let (mut lo, mut hi) = (k as f64 * step, (k + 1) as f64 * step);
        let flo = f_of(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f_of(mid) * flo > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return Ok(PairState { u, v: v_of(0.5 * (lo + hi)) });
    }
    Err(Error::Precondition("level set appears to be empty".into()))
}

/// A random full state on the level {j, T}.
pub fn sample_level_state<R: Rng + ?Sized>(
    params: &BodyParams,
    level: &LevelData,
    rng: &mut R,
) -> Result<FullState> {
    let pair = sample_level_pair(params, level, rng)?;
    let a = rotation_from_pair(&pair, level.j)?;
    let omega = omega_raw(pair.u, pair.v, params);
    Ok(FullState::new(a, omega))
}
