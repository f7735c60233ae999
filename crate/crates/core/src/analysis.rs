//! Critical circles and levels, the moment-map image, the vertical-moment
//! Euler reduction, Jellet invariants and monodromy of critical circles.

use crate::error::{Error, Result};
use crate::fields::{full_field, FnField, PairField};
use crate::integrate::{flow, IntegratorConfig, VariationalField};
use crate::model::{i_rho_u_inv_raw, i_rho_u_raw, omega_raw, orthogonal_unit, BodyParams, FullState, PairState};
use crate::vecrot::{Mat3, Rotation, Vec3};
use serde::{Deserialize, Serialize};

/// The relative equilibrium with ω along a principal axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalCircleData {
    pub axis: usize,
    /// The principal moment ι of that axis.
    pub iota: f64,
    pub omega_norm2: f64,
    /// Aω in space.
    pub spatial_omega: Vec3,
    pub t_crit: f64,
    /// Constant velocity of the contact point.
    pub contact_velocity: Vec3,
}

pub fn critical_data(params: &BodyParams, j: Vec3) -> Result<[CriticalCircleData; 3]> {
    if j.norm() == 0.0 {
        return Err(Error::Precondition("j = 0 has no critical circles".into()));
    }
    let rho = params.rho();
    let mut out = Vec::with_capacity(3);
    for axis in 0..3 {
        let iota = params.inertia()[axis];
        if iota == 0.0 {
            return Err(Error::Precondition(format!("principal moment {axis} vanishes")));
        }
        let w = (j + Vec3::E3 * (rho * j[2] / iota)) * (1.0 / (iota + rho));
        out.push(CriticalCircleData {
            axis,
            iota,
            omega_norm2: w.norm2(),
            spatial_omega: w,
            t_crit: (j.norm2() + rho * j[2] * j[2] / iota) / (2.0 * (iota + rho)),
            contact_velocity: j.cross(Vec3::E3) * (params.radius() / (iota + rho)),
        });
    }
    Ok([out[0], out[1], out[2]])
}

/// A point of the critical circle: A e_axis = sign·Aω/‖Aω‖, rotated by
/// `phase` about Aω.
pub fn critical_state(params: &BodyParams, j: Vec3, axis: usize, sign: f64, phase: f64) -> Result<FullState> {
    let data = critical_data(params, j)?[axis];
    let w = data.spatial_omega;
    let n = w.norm();
    if n == 0.0 {
        return Err(Error::Precondition("critical circle has ω = 0".into()));
    }
    let s = if sign < 0.0 { -1.0 } else { 1.0 };
    let a_axis = w * (s / n);
    let b0 = orthogonal_unit(a_axis);
    let spin = Rotation::from_axis_angle(a_axis, phase);
    let b = spin * b0;
    let c = a_axis.cross(b);
    let (k1, k2) = ((axis + 1) % 3, (axis + 2) % 3);
    let mut cols = [Vec3::ZERO; 3];
    cols[axis] = a_axis;
    cols[k1] = b;
    cols[k2] = c;
    let a = Rotation::try_new(Mat3::from_cols(cols[0], cols[1], cols[2]), 1e-9)?;
    Ok(FullState::new(a, Vec3::basis(axis) * (s * n)))
}

/// The form j ↦ (‖j‖² + (ρ/ι)j₃²)/(2(ι+ρ)) − T; its zero set is a shell of
/// singular values of the moment map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularForm {
    pub iota: f64,
    pub rho: f64,
    pub energy: f64,
}

impl SingularForm {
    pub fn eval(&self, j: Vec3) -> f64 {
        (j.norm2() + self.rho / self.iota * j[2] * j[2]) / (2.0 * (self.iota + self.rho)) - self.energy
    }

    /// Radius² of the shell in the horizontal plane.
    pub fn horizontal_radius2(&self) -> f64 {
        2.0 * (self.iota + self.rho) * self.energy
    }

    /// j₃² on the vertical axis.
    pub fn vertical_radius2(&self) -> f64 {
        2.0 * (self.iota + self.rho) * self.energy / (1.0 + self.rho / self.iota)
    }
}

pub fn singular_image(params: &BodyParams, energy: f64) -> Result<[SingularForm; 3]> {
    if !(energy > 0.0) {
        return Err(Error::Precondition(format!("T = {energy} must be positive")));
    }
    let f = |k: usize| SingularForm { iota: params.inertia()[k], rho: params.rho(), energy };
    Ok([f(0), f(1), f(2)])
}

/// u̇ = ((j₃² + 2Tρ)/j₃)·u×Ju for vertical moment.
pub fn euler_vertical_field(u: Vec3, params: &BodyParams, j3: f64, energy: f64) -> Result<Vec3> {
    if j3 == 0.0 {
        return Err(Error::Precondition("j3 = 0".into()));
    }
    let k = (j3 * j3 + 2.0 * energy * params.rho()) / j3;
    Ok(u.cross(params.j_diag().hadamard(u)) * k)
}

/// Residuals of ⟨u,Ju⟩ = 2T/(j₃²+2Tρ) and u = j₃/(j₃²+2Tρ)·(I+ρ)ω.
pub fn vertical_consistency(u: Vec3, omega: Vec3, params: &BodyParams, j3: f64, energy: f64) -> (f64, Vec3) {
    let den = j3 * j3 + 2.0 * energy * params.rho();
    let r1 = u.dot(params.j_diag().hadamard(u)) - 2.0 * energy / den;
    let r2 = u - params.i_plus_rho().hadamard(omega) * (j3 / den);
    (r1, r2)
}

/// Residual (I+ρ)ω̇ − ((I+ρ)ω)×ω of Euler's equations for I+ρ.
pub fn euler_form_residual(state: &FullState, params: &BodyParams) -> Vec3 {
    let wd = full_field(state, params).omega_dot;
    let ip = params.i_plus_rho();
    ip.hadamard(wd) - ip.hadamard(state.omega).cross(state.omega)
}

/// The state with rotation A whose moment is j₃e₃.
pub fn vertical_state(a: Rotation, j3: f64, params: &BodyParams) -> FullState {
    let u = a.inv_apply(Vec3::E3);
    FullState::new(a, i_rho_u_inv_raw(u * j3, u, params))
}

/// Jellet's integral F = ⟨Iω, u⟩ and G = ‖I_{ρ,u}ω‖² for a body of revolution.
pub fn jellet_invariants(state: &FullState, params: &BodyParams) -> Result<(f64, f64)> {
    let i = params.inertia();
    if (i[0] - i[1]).abs() > 1e-12 * i[0].abs().max(i[1].abs()) {
        return Err(Error::Precondition(format!("Jellet invariants need I1 = I2, got {} and {}", i[0], i[1])));
    }
    let u = state.u();
    let f = i.hadamard(state.omega).dot(u);
    let g = i_rho_u_raw(state.omega, u, params).norm2();
    Ok((f, g))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Elliptic,
    Parabolic,
    Hyperbolic,
}

/// Linearized Poincaré map of a critical circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monodromy {
    pub axis: usize,
    pub sign: f64,
    pub matrix: [[f64; 2]; 2],
    pub det: f64,
    pub trace: f64,
    pub period: f64,
    /// Distance between the start and the end of the integrated period.
    pub return_error: f64,
}

impl Monodromy {
    pub fn stability(&self, tol: f64) -> Stability {
        let t = self.trace.abs();
        if t < 2.0 - tol {
            Stability::Elliptic
        } else if t > 2.0 + tol {
            Stability::Hyperbolic
        } else {
            Stability::Parabolic
        }
    }
}

fn monodromy_from(phi: &[Vec<f64>], e: [&[f64]; 2], axis: usize, sign: f64, period: f64, return_error: f64) -> Monodromy {
    let apply = |v: &[f64]| -> Vec<f64> { phi.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect() };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut m = [[0.0; 2]; 2];
    for b in 0..2 {
        let pe = apply(e[b]);
        for a in 0..2 {
            m[a][b] = dot(e[a], &pe);
        }
    }
    Monodromy {
        axis,
        sign,
        matrix: m,
        det: m[0][0] * m[1][1] - m[0][1] * m[1][0],
        trace: m[0][0] + m[1][1],
        period,
        return_error,
    }
}

/// Monodromy of the critical circle through u = ±e_axis (vertical j) or with
/// A e_axis = ±Aω/‖Aω‖ (general j).
///
/// The linearized flow over one period is obtained from the variational
/// equations of the reduced (u, v) system and restricted to a transversal of
/// the orbit inside the j-level.
pub fn circle_monodromy(
    params: &BodyParams,
    j: Vec3,
    axis: usize,
    sign: f64,
    cfg: &IntegratorConfig,
) -> Result<Monodromy> {
    if axis > 2 {
        return Err(Error::Precondition(format!("axis index {axis} out of range")));
    }
    let i = params.inertia();
    let repeats = (0..3).filter(|&k| k != axis && i[k] == i[axis]).count();
    if repeats == 1 {
        return Err(Error::Precondition(
            "repeated principal moment: the critical set is a torus, use jellet_invariants".into(),
        ));
    }
    let data = critical_data(params, j)?[axis];
    let speed = data.omega_norm2.sqrt();
    if speed == 0.0 {
        return Err(Error::Precondition("critical circle has ω = 0".into()));
    }
    let period = 2.0 * std::f64::consts::PI / speed;
    let jh = (j[0] * j[0] + j[1] * j[1]).sqrt();
    if jh <= 1e-10 * j.norm() {
        vertical_monodromy(params, j[2], axis, sign, period, cfg)
    } else {
        general_monodromy(params, j, axis, sign, period, cfg)
    }
}

fn vertical_monodromy(
    params: &BodyParams,
    j3: f64,
    axis: usize,
    sign: f64,
    period: f64,
    cfg: &IntegratorConfig,
) -> Result<Monodromy> {
    let p = *params;
    let base = FnField::new(3, "vertical_u", move |y: &[f64], dy: &mut [f64]| {
        let u = Vec3::from_slice(y);
        let d = u.cross(omega_raw(u, u * j3, &p));
        dy.copy_from_slice(&d.0);
    });
    let s = if sign < 0.0 { -1.0 } else { 1.0 };
    // A e_axis = s·sign(j₃)e₃ gives u = s·sign(j₃)e_axis
    let u0 = Vec3::basis(axis) * (s * j3.signum());
    let var = VariationalField::new(base);
    let y = flow(&var, &var.initial(&u0.0), period, cfg)?;
    let (end, phi) = var.split(&y);
    let ret = (Vec3::from_slice(&end) - u0).norm();
    let e1 = Vec3::basis((axis + 1) % 3);
    let e2 = Vec3::basis((axis + 2) % 3);
    Ok(monodromy_from(&phi, [&e1.0, &e2.0], axis, sign, period, ret))
}

fn general_monodromy(
    params: &BodyParams,
    j: Vec3,
    axis: usize,
    sign: f64,
    period: f64,
    cfg: &IntegratorConfig,
) -> Result<Monodromy> {
    let state = critical_state(params, j, axis, sign, 0.0)?;
    let pair = crate::model::pair_from_full(&state.a, j);
    let x0 = pair.to_flat();
    let field = PairField { params: *params, weighted: false };
    let var = VariationalField::new(field);
    let y = flow(&var, &var.initial(&x0), period, cfg)?;
    let (end, phi) = var.split(&y);
    let ret = end.iter().zip(&x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    if ret > 1e-4 * (1.0 + j.norm()) {
        return Err(Error::Numerical(format!("orbit does not close after one period (gap {ret:e})")));
    }
    let basis = transversal_basis(&pair, params)?;
    Ok(monodromy_from(&phi, [&basis[0], &basis[1]], axis, sign, period, ret))
}

/// Gram–Schmidt against an orthonormal set; normalizes `x` and returns its
/// norm before normalization.
fn orthogonalize(x: &mut [f64], against: &[Vec<f64>]) -> f64 {
    for _ in 0..2 {
        for b in against {
            let d: f64 = x.iter().zip(b).map(|(p, q)| p * q).sum();
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi -= d * bi;
            }
        }
    }
    let n = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|a| *a /= n);
    }
    n
}

/// Orthonormal pair spanning the tangent space of the j-level at `pair`
/// orthogonal to the flow direction.
fn transversal_basis(pair: &PairState, params: &BodyParams) -> Result<[Vec<f64>; 2]> {
    let (u, v) = (pair.u, pair.v);
    let grads: [[f64; 6]; 3] = [
        [u[0], u[1], u[2], 0.0, 0.0, 0.0],
        [v[0], v[1], v[2], u[0], u[1], u[2]],
        [0.0, 0.0, 0.0, v[0], v[1], v[2]],
    ];
    let w = omega_raw(u, v, params);
    let fu = u.cross(w);
    let fv = v.cross(w);
    let flow_dir = [fu[0], fu[1], fu[2], fv[0], fv[1], fv[2]];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for g in grads.iter().map(|g| g.to_vec()).chain(std::iter::once(flow_dir.to_vec())) {
        let mut g = g;
        let n = orthogonalize(&mut g, &basis);
        if n < 1e-12 {
            return Err(Error::Numerical("degenerate j-level at the critical circle".into()));
        }
        basis.push(g);
    }
    let mut out = Vec::new();
    for k in 0..6 {
        let mut e = vec![0.0; 6];
        e[k] = 1.0;
        if orthogonalize(&mut e, &basis) > 1e-6 {
            basis.push(e.clone());
            out.push(e);
            if out.len() == 2 {
                break;
            }
        }
    }
    Ok([out[0].clone(), out[1].clone()])
}
