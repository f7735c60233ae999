//! Vector fields in their several realizations, their invariants, and
//! finite-difference probes.
//!
//! Every field is exposed through [`VectorField`] as a map on flat arrays so a
//! single integrator serves all state layouts.

use crate::error::{Error, Result};
use crate::model::{
    omega_raw, x_form, BodyParams, ExtendedState, FullState, PairState,
};
use crate::vecrot::{det3, hat, orthonormalize, Mat3, Rotation, Vec3};

/// A smooth vector field on ℝⁿ.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, y: &[f64], dy: &mut [f64]);
    /// Pulls a state back onto its constraint manifold; no-op by default.
    fn project(&self, _y: &mut [f64]) {}
    fn name(&self) -> &str;
}

impl<F: VectorField + ?Sized> VectorField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        (**self).eval(y, dy)
    }
    fn project(&self, y: &mut [f64]) {
        (**self).project(y)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

/// A field given by a closure.
pub struct FnField<F> {
    dim: usize,
    name: String,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> FnField<F> {
    pub fn new(dim: usize, name: &str, f: F) -> Self {
        FnField { dim, name: name.to_string(), f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        (self.f)(y, dy)
    }
    fn name(&self) -> &str {
        &self.name
    }
}

fn put(dy: &mut [f64], at: usize, v: Vec3) {
    dy[at..at + 3].copy_from_slice(&v.0);
}

// ---------------------------------------------------------------------------
// Full system

/// Time derivative of a [`FullState`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FullDerivative {
    pub a_dot: Mat3,
    pub omega_dot: Vec3,
    pub p_dot: Vec3,
}

/// Rolling equations: ṗ = r(Aω)×e₃, Ȧ = A·hat(ω), I_{ρ,u}ω̇ = (Iω)×ω.
pub fn full_field(state: &FullState, params: &BodyParams) -> FullDerivative {
    let a = *state.a.matrix();
    full_field_mat(&a, state.omega, params)
}

fn full_field_mat(a: &Mat3, omega: Vec3, params: &BodyParams) -> FullDerivative {
    let u = a.transpose() * Vec3::E3;
    let rhs = params.inertia().hadamard(omega).cross(omega);
    FullDerivative {
        a_dot: *a * hat(omega),
        omega_dot: crate::model::i_rho_u_inv_raw(rhs, u, params),
        p_dot: (*a * omega).cross(Vec3::E3) * params.radius(),
    }
}

/// Flat layout of the full system: A (9, row-major), ω (3), p₁, p₂ and a
/// clock slot holding the other time variable.
pub const FULL_DIM: usize = 15;
pub const FULL_A: usize = 0;
pub const FULL_OMEGA: usize = 9;
pub const FULL_P: usize = 12;
pub const FULL_CLOCK: usize = 14;

pub fn full_to_flat(state: &FullState, clock: f64) -> [f64; FULL_DIM] {
    let mut y = [0.0; FULL_DIM];
    y[..9].copy_from_slice(&state.a.matrix().to_flat());
    put(&mut y, FULL_OMEGA, state.omega);
    y[FULL_P] = state.p[0];
    y[FULL_P + 1] = state.p[1];
    y[FULL_CLOCK] = clock;
    y
}

/// Rebuilds a state; the rotation block is taken as is.
pub fn full_from_flat(y: &[f64]) -> FullState {
    FullState {
        a: Rotation::from_matrix_unchecked(Mat3::from_flat(&y[..9])),
        omega: Vec3::from_slice(&y[FULL_OMEGA..FULL_OMEGA + 3]),
        p: Vec3::new(y[FULL_P], y[FULL_P + 1], 0.0),
    }
}

/// The full system with a clock for the other time variable.
///
/// In physical time the clock slot carries τ with dτ/dt = X(u)^{−1/2}. When
/// `reparametrized` is set the field is multiplied by X^{1/2}, the independent
/// variable is τ and the clock slot carries t.
#[derive(Clone, Copy, Debug)]
pub struct FullField {
    pub params: BodyParams,
    pub reparametrized: bool,
}

impl FullField {
    pub fn new(params: BodyParams) -> Self {
        FullField { params, reparametrized: false }
    }

    pub fn reparametrized(params: BodyParams) -> Self {
        FullField { params, reparametrized: true }
    }
}

impl VectorField for FullField {
    fn dim(&self) -> usize {
        FULL_DIM
    }
    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let a = Mat3::from_flat(&y[..9]);
        let omega = Vec3::from_slice(&y[FULL_OMEGA..FULL_OMEGA + 3]);
        let d = full_field_mat(&a, omega, &self.params);
        let u = a.transpose() * Vec3::E3;
        let x = x_form(u, &self.params);
        let s = if self.reparametrized { x.sqrt() } else { 1.0 };
        dy[..9].copy_from_slice(&(d.a_dot * s).to_flat());
        put(dy, FULL_OMEGA, d.omega_dot * s);
        dy[FULL_P] = d.p_dot[0] * s;
        dy[FULL_P + 1] = d.p_dot[1] * s;
        dy[FULL_CLOCK] = if self.reparametrized { x.sqrt() } else { x.powf(-0.5) };
    }
    fn project(&self, y: &mut [f64]) {
        if let Ok(r) = orthonormalize(&Mat3::from_flat(&y[..9])) {
            y[..9].copy_from_slice(&r.matrix().to_flat());
        }
    }
    fn name(&self) -> &str {
        if self.reparametrized {
            "full_tau"
        } else {
            "full"
        }
    }
}

// ---------------------------------------------------------------------------
// Reduced (u, v) system

/// u̇ = u×ω, v̇ = v×ω with ω = omega_from_pair(u, v).
pub fn pair_field(pair: &PairState, params: &BodyParams) -> Result<PairState> {
    let w = crate::model::omega_from_pair(pair.u, pair.v, params)?;
    Ok(PairState { u: pair.u.cross(w), v: pair.v.cross(w) })
}

/// R_ω on ℝ⁶, optionally scaled by X^{1/2} (the field ξ in τ-time).
#[derive(Clone, Copy, Debug)]
pub struct PairField {
    pub params: BodyParams,
    pub weighted: bool,
}

impl VectorField for PairField {
    fn dim(&self) -> usize {
        6
    }
    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let u = Vec3::from_slice(&y[0..3]);
        let v = Vec3::from_slice(&y[3..6]);
        let w = omega_raw(u, v, &self.params);
        let s = if self.weighted { x_form(u, &self.params).sqrt() } else { 1.0 };
        put(dy, 0, u.cross(w) * s);
        put(dy, 3, v.cross(w) * s);
    }
    fn name(&self) -> &str {
        if self.weighted {
            "xi_pair"
        } else {
            "pair"
        }
    }
}

/// R_ν on ℝ⁶ with ν = v + (Y/X)u, optionally scaled by X^{1/2} (the field η).
#[derive(Clone, Copy, Debug)]
pub struct PairEtaField {
    pub params: BodyParams,
    pub weighted: bool,
}

/// ν = v + (Y/X)u = (I+ρ)ω for ω = omega_raw(u, v).
pub fn nu_raw(u: Vec3, v: Vec3, params: &BodyParams) -> Vec3 {
    let j = params.j_diag();
    v + u * (u.dot(j.hadamard(v)) / x_form(u, params))
}

impl VectorField for PairEtaField {
    fn dim(&self) -> usize {
        6
    }
    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let u = Vec3::from_slice(&y[0..3]);
        let v = Vec3::from_slice(&y[3..6]);
        let nu = nu_raw(u, v, &self.params);
        let s = if self.weighted { x_form(u, &self.params).sqrt() } else { 1.0 };
        put(dy, 0, u.cross(nu) * s);
        put(dy, 3, v.cross(nu) * s);
    }
    fn name(&self) -> &str {
        if self.weighted {
            "eta_pair"
        } else {
            "pair_nu"
        }
    }
}

// ---------------------------------------------------------------------------
// Extended polynomial fields on (u, v, z, ζ)

/// The cubic field ξ on ℝ⁸.
pub fn xi_ext(x: &ExtendedState, params: &BodyParams) -> ExtendedState {
    let j = params.j_diag();
    let (u, v, z, ze) = (x.u, x.v, x.z, x.zeta);
    let (ju, jv) = (j.hadamard(u), j.hadamard(v));
    ExtendedState {
        u: u.cross(jv) * z - u.cross(ju) * ze,
        v: v.cross(jv) * z - v.cross(ju) * ze,
        z: det3(u, ju, jv),
        zeta: det3(v, ju, jv),
    }
}

/// The cubic field η on ℝ⁸.
pub fn eta_ext(x: &ExtendedState, params: &BodyParams) -> ExtendedState {
    let j = params.j_diag();
    let (u, v, z, ze) = (x.u, x.v, x.z, x.zeta);
    ExtendedState {
        u: u.cross(v) * z,
        v: -(v.cross(u) * ze),
        z: det3(v, u, j.hadamard(u)),
        zeta: det3(v, u, j.hadamard(v)),
    }
}

/// (⟨u,u⟩, ⟨u,v⟩, ⟨v,v⟩, ⟨u,Ju⟩+z², ⟨u,Jv⟩+zζ, ⟨v,Jv⟩+ζ²).
pub fn f_invariants(x: &ExtendedState, params: &BodyParams) -> [f64; 6] {
    let j = params.j_diag();
    let (u, v) = (x.u, x.v);
    [
        u.dot(u),
        u.dot(v),
        v.dot(v),
        u.dot(j.hadamard(u)) + x.z * x.z,
        u.dot(j.hadamard(v)) + x.z * x.zeta,
        v.dot(j.hadamard(v)) + x.zeta * x.zeta,
    ]
}

#[derive(Clone, Copy, Debug)]
pub struct XiExtField {
    pub params: BodyParams,
}

impl VectorField for XiExtField {
    fn dim(&self) -> usize {
        8
    }
    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        dy.copy_from_slice(&xi_ext(&ExtendedState::from_flat(y), &self.params).to_flat());
    }
    fn name(&self) -> &str {
        "xi_ext"
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EtaExtField {
    pub params: BodyParams,
}

impl VectorField for EtaExtField {
    fn dim(&self) -> usize {
        8
    }
    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        dy.copy_from_slice(&eta_ext(&ExtendedState::from_flat(y), &self.params).to_flat());
    }
    fn name(&self) -> &str {
        "eta_ext"
    }
}

// ---------------------------------------------------------------------------
// Euclidean-algebra fields on (q, r)

/// Derivative (q̇, ṙ) of a point of the Euclidean algebra.
pub type E3Derivative = (Vec3, Vec3);

/// The images (ξ, η) of the extended fields under the wedge map.
pub fn e3_fields(q: Vec3, r: Vec3, params: &BodyParams) -> (E3Derivative, E3Derivative) {
    let j = params.j_diag();
    let jco = params.j_co();
    let xi = (q.cross(j.hadamard(r)), q.cross(jco.hadamard(q)) + r.cross(j.hadamard(r)));
    let eta = (q.cross(r), -q.cross(j.hadamard(q)));
    (xi, eta)
}

/// (⟨q,q⟩, ⟨q,r⟩, ⟨q,J^co q⟩ + ⟨r,Jr⟩, −⟨q,Jq⟩ + ⟨r,r⟩).
pub fn h_invariants(q: Vec3, r: Vec3, params: &BodyParams) -> [f64; 4] {
    let j = params.j_diag();
    let jco = params.j_co();
    [
        q.dot(q),
        q.dot(r),
        q.dot(jco.hadamard(q)) + r.dot(j.hadamard(r)),
        -q.dot(j.hadamard(q)) + r.dot(r),
    ]
}

/// One of the two e(3) fields on the flat layout (q, r).
#[derive(Clone, Copy, Debug)]
pub struct E3Field {
    pub params: BodyParams,
    pub eta: bool,
}

impl VectorField for E3Field {
    fn dim(&self) -> usize {
        6
    }
    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let (xi, eta) = e3_fields(Vec3::from_slice(&y[0..3]), Vec3::from_slice(&y[3..6]), &self.params);
        let (dq, dr) = if self.eta { eta } else { xi };
        put(dy, 0, dq);
        put(dy, 3, dr);
    }
    fn name(&self) -> &str {
        if self.eta {
            "e3_eta"
        } else {
            "e3_xi"
        }
    }
}

// ---------------------------------------------------------------------------
// Symmetric-matrix Lax system

/// ξ(B) = Bj + ρ⟨Bj,e₃⟩/(1 − ρ⟨Be₃,e₃⟩)·Be₃.
pub fn b_omega(b: &Mat3, j: Vec3, params: &BodyParams) -> Result<Vec3> {
    let den = 1.0 - params.rho() * b[(2, 2)];
    if den.abs() < 1e-14 {
        return Err(Error::VanishingDenominator("1 - rho <B e3, e3>"));
    }
    let bj = *b * j;
    let be3 = b.col(2);
    Ok(bj + be3 * (params.rho() * bj[2] / den))
}

/// Ḃ = [hat(ξ(B)), B].
pub fn b_matrix_field(b: &Mat3, j: Vec3, params: &BodyParams) -> Result<Mat3> {
    if !b.is_symmetric(1e-9 * b.max_abs().max(1.0)) {
        return Err(Error::Precondition("B must be symmetric".into()));
    }
    let w = b_omega(b, j, params)?;
    Ok(hat(w).commutator(b))
}

/// The Lax flow on flat row-major 3×3 matrices.
#[derive(Clone, Copy, Debug)]
pub struct BField {
    pub params: BodyParams,
    pub j: Vec3,
}

impl VectorField for BField {
    fn dim(&self) -> usize {
        9
    }
    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let b = Mat3::from_flat(y);
        let rho = self.params.rho();
        let bj = b * self.j;
        let be3 = b.col(2);
        let w = bj + be3 * (rho * bj[2] / (1.0 - rho * b[(2, 2)]));
        dy.copy_from_slice(&hat(w).commutator(&b).to_flat());
    }
    fn name(&self) -> &str {
        "lax_b"
    }
}

// ---------------------------------------------------------------------------
// Finite-difference probes

/// Central-difference divergence of weight·field at `point`.
pub fn divergence_probe(
    field: &dyn VectorField,
    point: &[f64],
    weight: &dyn Fn(&[f64]) -> f64,
    h: f64,
) -> f64 {
    let n = field.dim();
    let mut y = point.to_vec();
    let mut dy = vec![0.0; n];
    let mut div = 0.0;
    for i in 0..n {
        y[i] = point[i] + h;
        field.eval(&y, &mut dy);
        let plus = weight(&y) * dy[i];
        y[i] = point[i] - h;
        field.eval(&y, &mut dy);
        let minus = weight(&y) * dy[i];
        y[i] = point[i];
        div += (plus - minus) / (2.0 * h);
    }
    div
}

/// Central-difference Jacobian of `f: ℝⁿ → ℝᵐ`, returned row-major as m × n.
pub fn jacobian_fd(f: &dyn Fn(&[f64], &mut [f64]), x: &[f64], m: usize, h: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut jac = vec![vec![0.0; n]; m];
    let mut y = x.to_vec();
    let (mut fp, mut fm) = (vec![0.0; m], vec![0.0; m]);
    for k in 0..n {
        y[k] = x[k] + h;
        f(&y, &mut fp);
        y[k] = x[k] - h;
        f(&y, &mut fm);
        y[k] = x[k];
        for i in 0..m {
            jac[i][k] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Directional derivative of `g` along `d` by central differences.
pub fn directional_fd(g: &dyn VectorField, x: &[f64], d: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let yp: Vec<f64> = (0..n).map(|i| x[i] + h * d[i]).collect();
    let ym: Vec<f64> = (0..n).map(|i| x[i] - h * d[i]).collect();
    let (mut gp, mut gm) = (vec![0.0; n], vec![0.0; n]);
    g.eval(&yp, &mut gp);
    g.eval(&ym, &mut gm);
    (0..n).map(|i| (gp[i] - gm[i]) / (2.0 * h)).collect()
}

/// Lie bracket [f, g] = Dg·f − Df·g by central differences.
pub fn lie_bracket_fd(f: &dyn VectorField, g: &dyn VectorField, x: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let (mut fx, mut gx) = (vec![0.0; n], vec![0.0; n]);
    f.eval(x, &mut fx);
    g.eval(x, &mut gx);
    let dg_f = directional_fd(g, x, &fx, h);
    let df_g = directional_fd(f, x, &gx, h);
    (0..n).map(|i| dg_f[i] - df_g[i]).collect()
}

/// Gram determinant ‖a‖²‖b‖² − ⟨a,b⟩², the squared area spanned by a and b.
pub fn gram_area2(a: &[f64], b: &[f64]) -> f64 {
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    dot(a, a) * dot(b, b) - dot(a, b).powi(2)
}
