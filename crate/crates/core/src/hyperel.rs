//! Jacobi elliptic coordinates, the hyperelliptic curve of a horizontal level,
//! the flow on C×C, Abel increments, the branch annulus and the laws of the
//! translational motion.
//!
//! Every routine assumes horizontal nonzero moment; general levels are brought
//! to that form by [`crate::reduction::horizontalize`].

use crate::error::{Error, Result};
use crate::fields::{full_from_flat, FULL_CLOCK};
use crate::integrate::Trajectory;
use crate::model::{omega_raw, x_form, BodyParams, LevelData};
use crate::vecrot::{det3, Vec3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Which kind of branch value bounds an oscillation interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndKind {
    /// a_i, where the coordinate x_i of the point changes sign.
    Confocal(usize),
    /// γ, where d⟨p,j⟩/dτ changes sign.
    Gamma,
    /// −1/ρ.
    Plain,
}

/// An interval [lo, hi] between adjacent branch values on which P has the
/// sign of the real flow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_kind: EndKind,
    pub hi_kind: EndKind,
}

impl Interval {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
    pub fn half(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
    /// λ = mid − half·cos θ.
    pub fn lambda_at(&self, theta: f64) -> f64 {
        self.mid() - self.half() * theta.cos()
    }
}

/// Data of the curve z² = P(λ) attached to a horizontal level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveData {
    /// a_i = 1/I_i.
    pub a: Vec3,
    pub rho: f64,
    pub radius: f64,
    pub j_norm2: f64,
    pub energy: f64,
    pub tau: f64,
    pub gamma: f64,
    /// The finite branch values (−1/ρ, γ, a₁, a₂, a₃).
    pub branch_values: [f64; 5],
    /// Coefficients of P in increasing degree.
    pub poly: [f64; 6],
    pub c2: f64,
    /// √|c²|, stored positive.
    pub c: f64,
    /// sign(c²); when negative, z and c are both imaginary on the real flow.
    pub sigma: f64,
    pub d2: f64,
    pub d: f64,
    pub b0_2: f64,
    pub b0: f64,
    pub b1: f64,
}

impl CurveData {
    /// P(λ) = −∏(λ − e) over the finite branch values.
    pub fn p(&self, lambda: f64) -> f64 {
        -self.branch_values.iter().map(|e| lambda - e).product::<f64>()
    }

    /// Evaluates P from its stored coefficients.
    pub fn p_poly(&self, lambda: f64) -> f64 {
        self.poly.iter().rev().fold(0.0, |acc, c| acc * lambda + c)
    }

    /// The real-flow constant σ√|c²|, equal to c when c² > 0.
    pub fn c_eff(&self) -> f64 {
        self.sigma * self.c
    }

    fn end_kind(&self, e: f64) -> EndKind {
        if e == self.branch_values[1] {
            return EndKind::Gamma;
        }
        for i in 0..3 {
            if e == self.a[i] {
                return EndKind::Confocal(i);
            }
        }
        EndKind::Plain
    }

    /// σ·∏(λ − e) over the branch values other than the ends of `iv`.
    pub fn q_hat(&self, iv: &Interval, lambda: f64) -> f64 {
        let q: f64 = self
            .branch_values
            .iter()
            .filter(|&&e| e != iv.lo && e != iv.hi)
            .map(|e| lambda - e)
            .product();
        self.sigma * q
    }

    /// The oscillation interval containing λ.
    pub fn interval_of(&self, lambda: f64) -> Result<Interval> {
        let mut e = self.branch_values;
        e.sort_by(|a, b| a.total_cmp(b));
        let tol = 1e-9 * (1.0 + lambda.abs());
        let mut found: Vec<Interval> = Vec::new();
        for w in e.windows(2) {
            if lambda >= w[0] - tol && lambda <= w[1] + tol && self.sigma * self.p(0.5 * (w[0] + w[1])) > 0.0 {
                found.push(Interval { lo: w[0], hi: w[1], lo_kind: self.end_kind(w[0]), hi_kind: self.end_kind(w[1]) });
            }
        }
        match found.len() {
            1 => Ok(found[0]),
            0 => Err(Error::Precondition(format!("λ = {lambda} lies outside the real part of the curve"))),
            _ => Err(Error::Ambiguous("λ sits on a branch value shared by two real intervals")),
        }
    }

    /// X(u) predicted from the elliptic coordinates.
    pub fn x_from_lambdas(&self, l2: f64, l3: f64) -> f64 {
        let r = self.rho;
        let den: f64 = self.a.0.iter().map(|a| a + 1.0 / r).product();
        (l2 + 1.0 / r) * (l3 + 1.0 / r) / (r * r * den)
    }
}

pub fn curve_data(params: &BodyParams, level: &LevelData) -> Result<CurveData> {
    let j = level.j;
    let jn2 = level.j_norm2();
    if jn2 == 0.0 {
        return Err(Error::Precondition("j = 0".into()));
    }
    if !level.is_horizontal() {
        return Err(Error::Precondition(format!(
            "horizontal moment required: |j3| = {} > 1e-10 |j|; apply horizontalize first",
            j[2].abs()
        )));
    }
    let rho = params.rho();
    let t = level.energy;
    if (2.0 * t * rho - jn2).abs() <= 1e-12 * jn2 {
        return Err(Error::Precondition(format!("2 T rho = |j|^2 = {jn2}")));
    }
    let inertia = params.inertia();
    if inertia.0.iter().any(|&i| i == 0.0) {
        return Err(Error::Precondition("a principal moment vanishes".into()));
    }
    let mut crit: Vec<f64> = params.i_plus_rho().0.iter().map(|ip| jn2 / (2.0 * ip)).collect();
    crit.sort_by(|a, b| a.total_cmp(b));
    let between = |lo: f64, hi: f64| t > lo * (1.0 + 1e-12) && t < hi * (1.0 - 1e-12);
    if !(between(crit[0], crit[1]) || between(crit[1], crit[2])) {
        return Err(Error::Precondition(format!(
            "T = {t} is not strictly between adjacent critical levels {:?}",
            crit
        )));
    }
    let a = inertia.map(|i| 1.0 / i);
    let tau = level.tau();
    let gamma = level.gamma(rho);
    let e = [-1.0 / rho, gamma, a[0], a[1], a[2]];
    for p in 0..5 {
        for q in p + 1..5 {
            if (e[p] - e[q]).abs() <= 1e-12 * (1.0 + e[p].abs()) {
                return Err(Error::Precondition(format!("branch values {} and {} coincide", e[p], e[q])));
            }
        }
    }
    let mut poly = [0.0; 6];
    poly[0] = 1.0;
    for (deg, &ek) in e.iter().enumerate() {
        // multiply by (λ − e_k)
        for i in (0..=deg + 1).rev() {
            let lower = if i > 0 { poly[i - 1] } else { 0.0 };
            poly[i] = lower - ek * poly[i];
        }
    }
    let poly = poly.map(|c| -c);
    let prod_rho_a: f64 = a.0.iter().map(|ai| rho * ai + 1.0).product();
    let prod_a_rho: f64 = a.0.iter().map(|ai| ai + 1.0 / rho).product();
    let c2 = (4.0 * jn2 - 8.0 * rho * t) / prod_rho_a;
    let r = params.radius();
    let d2 = r * r * (jn2 - 2.0 * rho * t).powi(2) / (rho.powi(4) * prod_a_rho);
    let b0_2 = 4.0 * jn2 / (rho * rho * (1.0 / rho + gamma) * prod_a_rho);
    let b0 = b0_2.abs().sqrt();
    Ok(CurveData {
        a,
        rho,
        radius: r,
        j_norm2: jn2,
        energy: t,
        tau,
        gamma,
        branch_values: e,
        poly,
        c2,
        c: c2.abs().sqrt(),
        sigma: c2.signum(),
        d2,
        d: d2.sqrt(),
        b0_2,
        b0,
        b1: -b0 / rho,
    })
}

/// x_i = √a_i·u_i, a point of the sphere Σx_i²/a_i = 1.
pub fn x_of_u(u: Vec3, a: Vec3) -> Vec3 {
    Vec3::new(a[0].sqrt() * u[0], a[1].sqrt() * u[1], a[2].sqrt() * u[2])
}

fn check_distinct(a: Vec3) -> Result<()> {
    if a[0] == a[1] || a[1] == a[2] || a[0] == a[2] {
        return Err(Error::Precondition(format!("a_i must be pairwise distinct, got {:?}", a.0)));
    }
    Ok(())
}

/// y_i = x_i² in terms of (λ₂, λ₃), with λ₁ = 0.
pub fn y_from_elliptic(l2: f64, l3: f64, a: Vec3) -> Result<Vec3> {
    check_distinct(a)?;
    let y = |i: usize| {
        let num = a[i] * (a[i] - l2) * (a[i] - l3);
        let den: f64 = (0..3).filter(|&k| k != i).map(|k| a[i] - a[k]).product();
        num / den
    };
    Ok(Vec3::new(y(0), y(1), y(2)))
}

/// The two nonzero confocal parameters through x, with λ₂ ≤ λ₃.
pub fn elliptic_from_x(x: Vec3, a: Vec3) -> Result<(f64, f64)> {
    check_distinct(a)?;
    let on = (0..3).map(|i| x[i] * x[i] / a[i]).sum::<f64>();
    if (on - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!("Σ x_i²/a_i = {on}, expected 1")));
    }
    let (s, p) = sum_prod(x, a);
    let disc = s * s - 4.0 * p;
    let root = if disc >= 0.0 {
        disc.sqrt()
    } else if (-disc).sqrt() * 0.5 <= 1e-12 {
        0.0
    } else {
        return Err(Error::Numerical(format!("complex elliptic coordinates (Δ = {disc:e})")));
    };
    let big = 0.5 * (s + root);
    let small = if big != 0.0 { p / big } else { 0.5 * (s - root) };
    let (l2, l3) = (small.min(big), small.max(big));
    Ok((polish_root(l2, x, a), polish_root(l3, x, a)))
}

/// Refines a root λ near some a_i by Newton's method on δ = a_i − λ in
/// x_i² = δ(1 − Σ_{k≠i} x_k²/(a_k − a_i + δ)), which resolves δ to relative
/// precision where the quadratic formula only reaches absolute precision.
fn polish_root(lambda: f64, x: Vec3, a: Vec3) -> f64 {
    let i = (0..3).min_by(|&p, &q| (a[p] - lambda).abs().total_cmp(&(a[q] - lambda).abs())).unwrap_or(0);
    let d0 = a[i] - lambda;
    if d0 == 0.0 || d0.abs() > 1e-3 * (1.0 + a[i].abs()) {
        return lambda;
    }
    let mut d = d0;
    for _ in 0..4 {
        let (mut r, mut dr) = (0.0, 0.0);
        for k in (0..3).filter(|&k| k != i) {
            let den = a[k] - a[i] + d;
            r += x[k] * x[k] / den;
            dr -= x[k] * x[k] / (den * den);
        }
        let h = x[i] * x[i] - d * (1.0 - r);
        let hp = -(1.0 - r) + d * dr;
        if hp == 0.0 {
            return lambda;
        }
        let next = d - h / hp;
        if !next.is_finite() || (next - d0).abs() > 1e-3 * d0.abs() {
            return lambda;
        }
        if next == d {
            break;
        }
        d = next;
    }
    a[i] - d
}

/// λ₂ + λ₃ and λ₂λ₃ as functions of x.
fn sum_prod(x: Vec3, a: Vec3) -> (f64, f64) {
    let s = (0..3).map(|i| a[i] - x[i] * x[i]).sum::<f64>();
    let p = a[0] * a[1] * a[2] * (0..3).map(|i| x[i] * x[i] / (a[i] * a[i])).sum::<f64>();
    (s, p)
}

/// (Λ₂, Λ₃) = d(λ₂, λ₃)/dt along ẋ.
pub fn elliptic_rates(x: Vec3, xdot: Vec3, l2: f64, l3: f64, a: Vec3) -> (f64, f64) {
    let sd = -2.0 * x.dot(xdot);
    let pd = 2.0 * a[0] * a[1] * a[2] * (0..3).map(|i| x[i] * xdot[i] / (a[i] * a[i])).sum::<f64>();
    let den = l2 - l3;
    ((l2 * sd - pd) / den, (pd - l3 * sd) / den)
}

/// Residuals of the three quadratic-form identities relating ẋ to (Λ₂, Λ₃):
/// 4Σẋ², 4Σẋ²/a and the cyclic cross-term sum.
pub fn velocity_identities(x: Vec3, xdot: Vec3, a: Vec3) -> Result<[f64; 3]> {
    let (l2, l3) = elliptic_from_x(x, a)?;
    if (l2 - l3).abs() < 1e-8 {
        return Err(Error::Precondition("λ2 ≈ λ3: identities degenerate on the diagonal".into()));
    }
    let (d2, d3) = elliptic_rates(x, xdot, l2, l3, a);
    Ok(velocity_residuals(x, xdot, a, [l2, l3], [d2, d3]))
}

fn velocity_residuals(x: Vec3, xdot: Vec3, a: Vec3, l: [f64; 2], d: [f64; 2]) -> [f64; 3] {
    let s = |lam: f64| (0..3).map(|i| a[i] - lam).product::<f64>();
    let (l2, l3) = (l[0], l[1]);
    let (w2, w3) = (d[0] * d[0] / s(l2), d[1] * d[1] / s(l3));
    let lhs1 = 4.0 * xdot.norm2();
    let rhs1 = -l2 * (l3 - l2) * w2 - l3 * (l2 - l3) * w3;
    let lhs2 = 4.0 * (0..3).map(|i| xdot[i] * xdot[i] / a[i]).sum::<f64>();
    let rhs2 = (l2 - l3) * (w2 - w3);
    let lhs3: f64 = (0..3)
        .map(|i| {
            let k = (i + 1) % 3;
            4.0 * (a[i] * xdot[i] * x[k] - a[k] * xdot[k] * x[i]).powi(2) / (a[i] * a[k])
        })
        .sum();
    let rhs3 = (l2 - l3) * (l2 * l2 * w2 - l3 * l3 * w3);
    [lhs1 - rhs1, lhs2 - rhs2, lhs3 - rhs3]
}

/// Point of C×C: the pair (λ₂, λ₃) with sheet signs of z_k = s_k√P(λ_k).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticPoint {
    pub lambda2: f64,
    pub lambda3: f64,
    pub s2: i8,
    pub s3: i8,
}

const DIAGONAL_GUARD: f64 = 1e-8;

/// dλ₂/dτ = z₂(−cλ₃)/(λ₂−λ₃), dλ₃/dτ = z₃(−cλ₂)/(λ₂−λ₃).
pub fn cxc_field_z(l2: f64, l3: f64, z2: f64, z3: f64, c: f64) -> Result<(f64, f64)> {
    if (l2 - l3).abs() < DIAGONAL_GUARD {
        return Err(Error::Precondition("λ2 ≈ λ3: the diagonal is singular".into()));
    }
    let den = l2 - l3;
    Ok((z2 * (-c * l3) / den, z3 * (-c * l2) / den))
}

/// The C×C field at a point with z_k = s_k√(σP(λ_k)).
///
/// For σ = −1 both z and c are imaginary on real orbits; the product is
/// written with the real magnitudes and the factor σ.
pub fn cxc_field(pt: &EllipticPoint, c: f64, curve: &CurveData) -> Result<(f64, f64)> {
    let z = |l: f64, s: i8| f64::from(s) * (curve.sigma * curve.p(l)).max(0.0).sqrt();
    let (d2, d3) = cxc_field_z(pt.lambda2, pt.lambda3, z(pt.lambda2, pt.s2), z(pt.lambda3, pt.s3), c)?;
    Ok((curve.sigma * d2, curve.sigma * d3))
}

/// Elliptic data of one point of a τ-orbit of the pair system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointCoords {
    pub lambda: [f64; 2],
    pub rates: [f64; 2],
    /// Signed d⟨p,j⟩/dτ = r X^{1/2} det(ω, u, v).
    pub dpj: f64,
    x: Vec3,
}

/// λ, dλ/dτ and d⟨p,j⟩/dτ at (u, v).
pub fn point_coords(u: Vec3, v: Vec3, params: &BodyParams, curve: &CurveData) -> Result<PointCoords> {
    let a = curve.a;
    let u = u.normalized();
    let x = x_of_u(u, a);
    let (l2, l3) = elliptic_from_x(x, a)?;
    let w = omega_raw(u, v, params);
    let xs = x_form(u, params).sqrt();
    let udot = u.cross(w) * xs;
    let (d2, d3) = elliptic_rates(x, x_of_u(udot, a), l2, l3, a);
    Ok(PointCoords { lambda: [l2, l3], rates: [d2, d3], dpj: params.radius() * xs * det3(w, u, v), x })
}

/// Distance |λ_k − e| to an end of its interval, computed from a quantity
/// that vanishes linearly there when the end is close.
fn end_distance(pc: &PointCoords, k: usize, e: f64, kind: EndKind, curve: &CurveData) -> f64 {
    let lam = pc.lambda[k];
    let lo = pc.lambda[1 - k];
    let naive = (lam - e).abs();
    if naive > 1e-4 {
        return naive;
    }
    match kind {
        EndKind::Confocal(i) => {
            let a = curve.a;
            let di: f64 = (0..3).filter(|&m| m != i).map(|m| a[i] - a[m]).product();
            (pc.x[i] * pc.x[i] * di / (a[i] * (a[i] - lo))).abs()
        }
        EndKind::Gamma => pc.dpj * pc.dpj / (curve.d2 * (curve.gamma - lo).abs()),
        EndKind::Plain => naive,
    }
}

/// A turning point of λ_k at an end of its interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurningPoint {
    pub tau: f64,
    /// Index of the trajectory step containing the turning point.
    pub segment: usize,
    /// 0 for λ₂, 1 for λ₃.
    pub k: usize,
    pub lambda: f64,
    pub at_hi: bool,
    /// Distance from the branch value.
    pub offset: f64,
}

/// Elliptic coordinates along a τ-orbit with tracked sheets and angle lifts
/// λ_k = mid_k − half_k·cos θ_k.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticTrack {
    pub tau: Vec<f64>,
    pub lambda: Vec<[f64; 2]>,
    pub rates: Vec<[f64; 2]>,
    pub theta: Vec<[f64; 2]>,
    /// Number of turning points passed by each coordinate.
    pub half_turns: Vec<[u64; 2]>,
    pub sheets: Vec<[i8; 2]>,
    pub intervals: [Interval; 2],
    pub turning: Vec<TurningPoint>,
}

/// Turning points must sit this close to a branch value.
pub const BRANCH_MATCH_TOL: f64 = 1e-6;

fn kappa(l: [f64; 2], k: usize, curve: &CurveData) -> f64 {
    let other = l[1 - k];
    (curve.sigma * (-curve.c * other) / (l[0] - l[1])).signum()
}

fn lift(m: u64, cos_t: f64, sin_abs: f64) -> f64 {
    let phi = sin_abs.atan2(cos_t);
    let base = m as f64 * PI;
    if m % 2 == 0 {
        base + phi
    } else {
        base + PI - phi
    }
}

/// Builds the elliptic track of a trajectory of the X^{1/2}-weighted pair
/// field (τ-time, layout (u, v)).
///
/// Sheet signs start from the sign of dλ_k/dτ and flip only at turning points,
/// which are located by sign changes of dλ_k/dτ and must lie on a branch value.
pub fn build_track(traj: &Trajectory, params: &BodyParams, curve: &CurveData) -> Result<EllipticTrack> {
    let coords = |y: &[f64]| point_coords(Vec3::from_slice(&y[0..3]), Vec3::from_slice(&y[3..6]), params, curve);
    let pcs: Vec<PointCoords> = traj.y.iter().map(|y| coords(y)).collect::<Result<_>>()?;
    let l0 = pcs[0].lambda;
    let intervals = [curve.interval_of(l0[0])?, curve.interval_of(l0[1])?];
    if intervals[0] == intervals[1] {
        return Err(Error::Precondition("λ2 and λ3 share an interval".into()));
    }
    let mut turning: Vec<(usize, TurningPoint)> = Vec::new();
    let mut m0 = [0u64; 2];
    for k in 0..2 {
        let iv = intervals[k];
        let r0 = pcs[0].rates[k];
        let near_lo = end_distance(&pcs[0], k, iv.lo, iv.lo_kind, curve) < 1e-9;
        let near_hi = end_distance(&pcs[0], k, iv.hi, iv.hi_kind, curve) < 1e-9;
        m0[k] = if near_lo {
            0
        } else if near_hi {
            1
        } else if r0 >= 0.0 {
            0
        } else {
            1
        };
        let g = |_t: f64, y: &[f64]| coords(y).map(|p| p.rates[k]).unwrap_or(f64::NAN);
        let mut m = m0[k];
        for ev in traj.find_crossings(k, &g) {
            if ev.t - traj.t0() < 1e-9 && (near_lo || near_hi) {
                continue;
            }
            let y = traj.hermite(ev.segment, ev.t);
            let pc = coords(&y)?;
            let at_hi = m % 2 == 0;
            let (e, kind) = if at_hi { (iv.hi, iv.hi_kind) } else { (iv.lo, iv.lo_kind) };
            let offset = end_distance(&pc, k, e, kind, curve);
            if offset > BRANCH_MATCH_TOL * (1.0 + e.abs()) {
                return Err(Error::SheetAmbiguity(format!(
                    "dλ{}/dτ changes sign at τ = {} with λ = {} not on the expected branch value {e}",
                    k + 2,
                    ev.t,
                    pc.lambda[k]
                )));
            }
            turning.push((ev.segment, TurningPoint { tau: ev.t, segment: ev.segment, k, lambda: pc.lambda[k], at_hi, offset }));
            m += 1;
        }
    }
    turning.sort_by(|a, b| a.1.tau.total_cmp(&b.1.tau));
    let n = pcs.len();
    let (mut theta, mut sheets, mut half_turns) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (i, pc) in pcs.iter().enumerate() {
        let mut th = [0.0; 2];
        let mut ms = [0u64; 2];
        let mut sh = [0i8; 2];
        for k in 0..2 {
            let iv = intervals[k];
            let m = m0[k] + turning.iter().filter(|(seg, tp)| tp.k == k && *seg < i).count() as u64;
            let dlo = end_distance(pc, k, iv.lo, iv.lo_kind, curve);
            let dhi = end_distance(pc, k, iv.hi, iv.hi_kind, curve);
            let half = iv.half();
            th[k] = lift(m, (dhi - dlo) / (2.0 * half), (dlo * dhi).sqrt() / half);
            ms[k] = m;
            let eps = if m % 2 == 0 { 1.0 } else { -1.0 };
            sh[k] = (eps * kappa(pc.lambda, k, curve)) as i8;
        }
        theta.push(th);
        half_turns.push(ms);
        sheets.push(sh);
    }
    Ok(EllipticTrack {
        tau: traj.t.clone(),
        lambda: pcs.iter().map(|p| p.lambda).collect(),
        rates: pcs.iter().map(|p| p.rates).collect(),
        theta,
        half_turns,
        sheets,
        intervals,
        turning: turning.into_iter().map(|(_, t)| t).collect(),
    })
}

impl EllipticTrack {
    pub fn point(&self, i: usize) -> EllipticPoint {
        EllipticPoint {
            lambda2: self.lambda[i][0],
            lambda3: self.lambda[i][1],
            s2: self.sheets[i][0],
            s3: self.sheets[i][1],
        }
    }

    /// The same track on the opposite sheets.
    pub fn flipped(&self) -> EllipticTrack {
        let mut t = self.clone();
        t.sheets.iter_mut().for_each(|s| *s = [-s[0], -s[1]]);
        t
    }
}

/// max over samples of |dλ_k/dτ − cxc_field|.
pub fn cxc_residual(track: &EllipticTrack, curve: &CurveData) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..track.tau.len() {
        let (d2, d3) = cxc_field(&track.point(i), curve.c, curve)?;
        worst = worst.max((d2 - track.rates[i][0]).abs()).max((d3 - track.rates[i][1]).abs());
    }
    Ok(worst)
}

const GL_X: [f64; 4] = [0.1834346424956498, 0.5255324099163290, 0.7966664774136267, 0.9602898564975363];
const GL_W: [f64; 4] = [0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763];

/// ∫ λ^p dθ/√Q̂(λ(θ)) over [θa, θb] by composite Gauss–Legendre.
pub fn theta_integral(curve: &CurveData, iv: &Interval, power: i32, ta: f64, tb: f64) -> f64 {
    if ta == tb {
        return 0.0;
    }
    let pieces = ((tb - ta).abs() / 0.25).ceil().max(1.0) as usize;
    let h = (tb - ta) / pieces as f64;
    let f = |th: f64| {
        let l = iv.lambda_at(th);
        l.powi(power) / curve.q_hat(iv, l).sqrt()
    };
    let mut sum = 0.0;
    for k in 0..pieces {
        let mid = ta + (k as f64 + 0.5) * h;
        let half = 0.5 * h;
        for q in 0..4 {
            sum += GL_W[q] * (f(mid - half * GL_X[q]) + f(mid + half * GL_X[q]));
        }
    }
    sum * 0.5 * h
}

/// The periods ∫₀^{2π} λ^p dθ/√Q̂ for p = 0, 1.
pub fn interval_periods(curve: &CurveData, iv: &Interval) -> [f64; 2] {
    [theta_integral(curve, iv, 0, 0.0, 2.0 * PI), theta_integral(curve, iv, 1, 0.0, 2.0 * PI)]
}

/// Accumulated Abel integrals along a track.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbelReport {
    pub tau_span: f64,
    /// ∫β₀ = ∫dλ₂/z₂ − ∫dλ₃/z₃ at the end.
    pub beta0: f64,
    /// ∫β₁ = ∫λ₂dλ₂/z₂ − ∫λ₃dλ₃/z₃ at the end.
    pub beta1: f64,
    pub c_tau: f64,
    /// max |∫β₁| over the samples.
    pub max_drift1: f64,
    /// max |∫β₀ − cτ| over the samples.
    pub max_deviation0: f64,
}

/// ∫β₀ and ∫β₁ accumulated between samples in the angle variables, where
/// dλ/z = (sign sin θ / s)·dθ/√Q̂ is smooth across turning points.
pub fn abel_increments(track: &EllipticTrack, curve: &CurveData) -> AbelReport {
    let (mut b0, mut b1) = (0.0, 0.0);
    let (mut drift1, mut dev0): (f64, f64) = (0.0, 0.0);
    let ce = curve.c_eff();
    for i in 1..track.tau.len() {
        for k in 0..2 {
            let iv = &track.intervals[k];
            let (ta, tb) = (track.theta[i - 1][k], track.theta[i][k]);
            let m = (ta / PI).floor();
            let eps = if (m as i64) % 2 == 0 { 1.0 } else { -1.0 };
            let factor = eps / f64::from(track.sheets[i - 1][k]);
            let sgn = if k == 0 { 1.0 } else { -1.0 };
            b0 += sgn * factor * theta_integral(curve, iv, 0, ta, tb);
            b1 += sgn * factor * theta_integral(curve, iv, 1, ta, tb);
        }
        drift1 = drift1.max(b1.abs());
        dev0 = dev0.max((b0 - ce * (track.tau[i] - track.tau[0])).abs());
    }
    let span = track.tau.last().map_or(0.0, |t| t - track.tau[0]);
    AbelReport { tau_span: span, beta0: b0, beta1: b1, c_tau: ce * span, max_drift1: drift1, max_deviation0: dev0 }
}

/// Return map of the τ-flow on the section θ₂ ∈ 2πℤ (λ₂ at the lower end of
/// its interval, increasing), in the circle coordinate ψ = Φ(θ₃)/Φ(2π) with
/// Φ(θ) = ∫₀^θ λ dθ/√Q̂₃.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnMapReport {
    pub crossings: usize,
    pub rotation_number: f64,
    /// max over returns of the distance of ψ_n − ψ₀ − nρ to ℤ.
    pub max_deviation: f64,
    pub psi: Vec<f64>,
}

fn cumulative(curve: &CurveData, iv: &Interval, period: f64, theta: f64) -> f64 {
    let turns = (theta / (2.0 * PI)).floor();
    turns * period + theta_integral(curve, iv, 1, 0.0, theta - turns * 2.0 * PI)
}

pub fn return_map(traj: &Trajectory, track: &EllipticTrack, params: &BodyParams, curve: &CurveData) -> Result<ReturnMapReport> {
    let iv2 = track.intervals[0];
    let iv3 = track.intervals[1];
    let p2 = interval_periods(curve, &iv2)[1];
    let p3 = interval_periods(curve, &iv3)[1];
    let f2 = 1.0 / kappa(track.lambda[0], 0, curve);
    let f3 = 1.0 / kappa(track.lambda[0], 1, curve);
    let rot = f2 / f3 * p2 / p3;
    let mut psi = Vec::new();
    for tp in track.turning.iter().filter(|t| t.k == 0 && !t.at_hi) {
        let y = traj.state_at(tp.tau);
        let pc = point_coords(Vec3::from_slice(&y[0..3]), Vec3::from_slice(&y[3..6]), params, curve)?;
        let i = tp.segment;
        let m = track.half_turns[i][1]
            + track.turning.iter().filter(|t| t.k == 1 && t.segment == i && t.tau <= tp.tau).count() as u64;
        let dlo = end_distance(&pc, 1, iv3.lo, iv3.lo_kind, curve);
        let dhi = end_distance(&pc, 1, iv3.hi, iv3.hi_kind, curve);
        let half = iv3.half();
        let th = lift(m, (dhi - dlo) / (2.0 * half), (dlo * dhi).sqrt() / half);
        psi.push(cumulative(curve, &iv3, p3, th) / p3);
    }
    let mut worst: f64 = 0.0;
    for (n, p) in psi.iter().enumerate() {
        let d = p - psi[0] - n as f64 * rot;
        worst = worst.max((d - d.round()).abs());
    }
    Ok(ReturnMapReport { crossings: psi.len(), rotation_number: rot.rem_euclid(1.0), max_deviation: worst, psi })
}

/// Closest approach of a trajectory to its start after it has first left a
/// neighbourhood of radius `leave`, refined on the dense output.
pub fn near_return(traj: &Trajectory, leave: f64) -> Option<(f64, f64)> {
    let y0 = &traj.y[0];
    let dist = |y: &[f64]| y.iter().zip(y0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let start = traj.y.iter().position(|y| dist(y) > leave)?;
    let (best, _) = (start..traj.len())
        .map(|i| (i, dist(&traj.y[i])))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    let lo = traj.t[best.saturating_sub(1).max(start)];
    let hi = traj.t[(best + 1).min(traj.len() - 1)];
    let (mut a, mut b) = (lo, hi);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let f = |t: f64| dist(&traj.state_at(t));
    for _ in 0..100 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let t = 0.5 * (a + b);
    Some((t, f(t).min(dist(&traj.y[best]))))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Interior,
    Boundary,
    Exterior,
}

/// Position of u relative to the real annulus swept by the level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchClass {
    /// Diagonal of K = [1 − τ(I+ρ)]⁻¹I.
    pub k_diag: Vec3,
    pub value: f64,
    /// c_i = 1/(I_i+ρ) − τ.
    pub c: Vec3,
    pub sign_product: f64,
    pub verdict: Verdict,
}

pub fn branch_classify(u: Vec3, params: &BodyParams, level: &LevelData) -> Result<BranchClass> {
    let tau = level.tau();
    let ip = params.i_plus_rho();
    let mut kd = Vec3::ZERO;
    for i in 0..3 {
        let den = 1.0 - tau * ip[i];
        if den.abs() < 1e-14 {
            return Err(Error::Precondition(format!("1 - tau (I_{} + rho) = 0: critical level", i + 1)));
        }
        kd[i] = params.inertia()[i] / den;
    }
    let value = u.dot(kd.hadamard(u));
    let c = ip.map(|x| 1.0 / x - tau);
    let sp = c[0] * c[1] * c[2] * value;
    let verdict = if value.abs() <= 1e-9 * kd.max_abs() {
        Verdict::Boundary
    } else if sp < 0.0 {
        Verdict::Interior
    } else {
        Verdict::Exterior
    };
    Ok(BranchClass { k_diag: kd, value, c, sign_product: sp, verdict })
}

/// The three laws of the translational motion on a horizontal level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationReport {
    /// max |⟨p(t) − p(0), j×e₃⟩ − 2rT t|.
    pub linear_law: f64,
    /// max |(d⟨p,j⟩/dτ)² + d²(γ−λ₂)(γ−λ₃)|.
    pub dpj_residual: f64,
    /// (⟨p,j⟩(end) − ⟨p,j⟩(0))/τ.
    pub average_rate: f64,
    pub t_span: f64,
    pub tau_span: f64,
}

/// Evaluates the translation laws on a full trajectory. With `reparametrized`
/// the trajectory runs in τ and the clock slot holds t, otherwise the reverse.
pub fn translation_laws(
    traj: &Trajectory,
    reparametrized: bool,
    params: &BodyParams,
    level: &LevelData,
    curve: &CurveData,
) -> Result<TranslationReport> {
    let j = level.j;
    let je = j.cross(Vec3::E3);
    let rate = 2.0 * params.radius() * level.energy;
    let times = |i: usize| {
        let (a, b) = (traj.t[i], traj.y[i][FULL_CLOCK]);
        if reparametrized {
            (b, a)
        } else {
            (a, b)
        }
    };
    let s0 = full_from_flat(&traj.y[0]);
    let (t0, tau0) = times(0);
    let (mut lin, mut res): (f64, f64) = (0.0, 0.0);
    for i in 0..traj.len() {
        let s = full_from_flat(&traj.y[i]);
        let (t, _) = times(i);
        lin = lin.max(((s.p - s0.p).dot(je) - rate * (t - t0)).abs());
        let u = s.a.inv_apply(Vec3::E3);
        let v = s.a.inv_apply(j);
        let pc = point_coords(u, v, params, curve)?;
        let [l2, l3] = pc.lambda;
        res = res.max((pc.dpj * pc.dpj + curve.d2 * (curve.gamma - l2) * (curve.gamma - l3)).abs());
    }
    let n = traj.len() - 1;
    let (t1, tau1) = times(n);
    let send = full_from_flat(&traj.y[n]);
    let span = tau1 - tau0;
    let avg = if span > 0.0 { (send.p - s0.p).dot(j) / span } else { 0.0 };
    Ok(TranslationReport { linear_law: lin, dpj_residual: res, average_rate: avg, t_span: t1 - t0, tau_span: span })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{full_to_flat, FullField, PairField};
    use crate::integrate::{integrate, IntegratorConfig};
    use crate::model::{random_unit, sample_level_pair, sample_level_state};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stb() -> BodyParams {
        BodyParams::stb()
    }

    fn shr_curve() -> CurveData {
        curve_data(&stb(), &LevelData::shr()).unwrap()
    }

    fn a123() -> Vec3 {
        Vec3::new(1.0, 2.0, 3.0)
    }

    #[test]
    fn curve_data_examples() {
        let c = shr_curve();
        assert_eq!(c.a, Vec3::new(1.0, 0.5, 1.0 / 3.0));
        assert!((c.tau - 0.4).abs() < 1e-15 && (c.gamma - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.p(0.0) + 1.0 / 9.0).abs() < 1e-15);
        assert!((c.p_poly(0.0) + 1.0 / 9.0).abs() < 1e-15);
        assert!((c.p_poly(0.77) - c.p(0.77)).abs() < 1e-14);
        assert_eq!(c.poly[5], -1.0);
        assert!((c.c2 - 2.4).abs() < 1e-12 && (c.d2 - 1.44).abs() < 1e-12 && (c.b0_2 - 2.4).abs() < 1e-12);
        assert!((c.b1 + c.b0).abs() < 1e-15);
        for t in [2.0 / 3.0, 1.0, 0.5, 1.2] {
            assert!(curve_data(&stb(), &LevelData::new(Vec3::new(2.0, 0.0, 0.0), t)).is_err(), "T = {t}");
        }
        assert!(curve_data(&stb(), &LevelData::new(Vec3::new(2.0, 0.0, 1.0), 1.0)).is_err());
    }

    #[test]
    fn elliptic_examples() {
        let y = y_from_elliptic(1.5, 2.5, a123()).unwrap();
        assert!((y - Vec3::new(0.375, 0.5, 1.125)).max_abs() < 1e-15);
        assert!(((0..3).map(|i| y[i] / a123()[i]).sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((y_from_elliptic(2.0, 3.0, a123()).unwrap() - Vec3::E1).max_abs() < 1e-15);
        assert_eq!(y_from_elliptic(2.5, 1.5, a123()).unwrap(), y_from_elliptic(1.5, 2.5, a123()).unwrap());
        assert!(y_from_elliptic(1.5, 2.5, Vec3::new(1.0, 1.0, 3.0)).is_err());
        let x = y.map(f64::sqrt);
        let (l2, l3) = elliptic_from_x(x, a123()).unwrap();
        assert!((l2 - 1.5).abs() < 1e-14 && (l3 - 2.5).abs() < 1e-14);
        let (l2, l3) = elliptic_from_x(Vec3::E1, a123()).unwrap();
        assert!((l2 - 2.0).abs() < 1e-14 && (l3 - 3.0).abs() < 1e-14);
        assert!(elliptic_from_x(Vec3::new(1.0, 1.0, 1.0), a123()).is_err());
    }

    #[test]
    fn elliptic_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = a123();
        for _ in 0..1000 {
            let u = random_unit(&mut rng);
            let x = x_of_u(u, a);
            let (l2, l3) = elliptic_from_x(x, a).unwrap();
            let y = y_from_elliptic(l2, l3, a).unwrap();
            for i in 0..3 {
                assert!((y[i] - x[i] * x[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn velocity_identity_examples() {
        let a = a123();
        let y = Vec3::new(0.375, 0.5, 1.125);
        let x = y.map(f64::sqrt);
        // motion with (Λ₂, Λ₃) = (1, 0): ẏ_i = −y_i/(a_i − λ₂)
        let xdot = Vec3::new(
            -y[0] / (a[0] - 1.5) / (2.0 * x[0]),
            -y[1] / (a[1] - 1.5) / (2.0 * x[1]),
            -y[2] / (a[2] - 1.5) / (2.0 * x[2]),
        );
        assert!((xdot.hadamard(xdot) - Vec3::new(0.375, 0.5, 0.125)).max_abs() < 1e-15);
        assert!((4.0 * xdot.norm2() - 4.0).abs() < 1e-14);
        let (d2, d3) = elliptic_rates(x, xdot, 1.5, 2.5, a);
        assert!((d2 - 1.0).abs() < 1e-14 && d3.abs() < 1e-14);
        assert!(velocity_identities(x, xdot, a).unwrap().iter().all(|r| r.abs() < 1e-13));
        assert_eq!(velocity_identities(x, Vec3::ZERO, a).unwrap(), [0.0; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x = x_of_u(random_unit(&mut rng), a);
            let n = (0..3).map(|i| x[i] / a[i]).collect::<Vec<_>>();
            let n = Vec3::new(n[0], n[1], n[2]);
            let r = random_unit(&mut rng);
            let xdot = r - n * (r.dot(n) / n.norm2());
            let res = velocity_identities(x, xdot, a).unwrap();
            assert!(res.iter().all(|r| r.abs() < 1e-9), "{res:?}");
        }
    }

    #[test]
    fn cxc_field_examples() {
        assert_eq!(cxc_field_z(2.0, 1.0, 1.0, 1.0, 1.0).unwrap(), (-1.0, -2.0));
        assert_eq!(cxc_field_z(2.0, 0.0, 1.0, 1.0, 1.0).unwrap().0, 0.0);
        let (a, b) = cxc_field_z(2.0, 1.0, 0.7, -0.3, 0.0).unwrap();
        assert!(a == 0.0 && b == 0.0);
        assert!(cxc_field_z(1.0, 1.0 + 1e-9, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn branch_classify_examples() {
        let p = stb();
        let b = branch_classify(Vec3::E2, &p, &LevelData::shr()).unwrap();
        assert!((b.k_diag - Vec3::new(5.0, -10.0, -5.0)).max_abs() < 1e-12);
        assert!((b.value + 10.0).abs() < 1e-12);
        assert!((b.c[0] * b.c[1] * b.c[2] - 0.001).abs() < 1e-15);
        assert_eq!(b.verdict, Verdict::Interior);
        let b = branch_classify(Vec3::E1, &p, &LevelData::shr()).unwrap();
        assert!((b.value - 5.0).abs() < 1e-12);
        assert_eq!(b.verdict, Verdict::Exterior);
        assert!(branch_classify(Vec3::E1, &p, &LevelData::new(Vec3::new(2.0, 0.0, 0.0), 1.0)).is_err());
    }

    fn shr_orbit(seed: u64, tau_end: f64) -> (Trajectory, CurveData) {
        let p = stb();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = sample_level_pair(&p, &LevelData::shr(), &mut rng).unwrap();
        let field = PairField { params: p, weighted: true };
        let traj = integrate(&field, &pair.to_flat(), 0.0, tau_end, &IntegratorConfig::adaptive(1e-12, 1e-12)).unwrap();
        (traj, shr_curve())
    }

    #[test]
    fn x_identity_and_intervals() {
        let c = shr_curve();
        let p = stb();
        let (traj, _) = shr_orbit(4, 3.0);
        for y in &traj.y {
            let u = Vec3::from_slice(&y[0..3]);
            let pc = point_coords(u, Vec3::from_slice(&y[3..6]), &p, &c).unwrap();
            assert!((x_form(u, &p) - c.x_from_lambdas(pc.lambda[0], pc.lambda[1])).abs() < 1e-10);
            assert!(pc.lambda[0] >= 1.0 / 3.0 - 1e-9 && pc.lambda[0] <= 0.5 + 1e-9);
            assert!(pc.lambda[1] >= 2.0 / 3.0 - 1e-9 && pc.lambda[1] <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn track_follows_cxc_flow() {
        let (traj, c) = shr_orbit(42, 5.0);
        let track = build_track(&traj, &stb(), &c).unwrap();
        assert!(!track.turning.is_empty());
        assert!(cxc_residual(&track, &c).unwrap() < 1e-6);
        let rep = abel_increments(&track, &c);
        assert!(rep.max_drift1 < 1e-6, "{rep:?}");
        assert!(rep.max_deviation0 < 1e-6, "{rep:?}");
        let flip = abel_increments(&track.flipped(), &c);
        assert!((flip.beta0 + rep.beta0).abs() < 1e-14 && (flip.beta1 + rep.beta1).abs() < 1e-14);
    }

    #[test]
    fn abel_zero_duration() {
        let (traj, c) = shr_orbit(42, 0.0);
        let track = build_track(&traj, &stb(), &c).unwrap();
        let rep = abel_increments(&track, &c);
        assert_eq!((rep.beta0, rep.beta1), (0.0, 0.0));
    }

    #[test]
    fn translation_laws_on_shr_orbit() {
        let p = stb();
        let level = LevelData::shr();
        let c = shr_curve();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = sample_level_state(&p, &level, &mut rng).unwrap();
        let traj = integrate(&FullField::new(p), &full_to_flat(&s, 0.0), 0.0, 20.0, &IntegratorConfig::default()).unwrap();
        let rep = translation_laws(&traj, false, &p, &level, &c).unwrap();
        assert!(rep.linear_law < 1e-8, "{rep:?}");
        assert!(rep.dpj_residual < 1e-6, "{rep:?}");
    }

    #[test]
    fn turning_points_of_p_lie_on_branch_boundary() {
        let p = stb();
        let level = LevelData::shr();
        let c = shr_curve();
        let (traj, _) = shr_orbit(9, 10.0);
        let g = |_t: f64, y: &[f64]| {
            point_coords(Vec3::from_slice(&y[0..3]), Vec3::from_slice(&y[3..6]), &p, &c).unwrap().dpj
        };
        let ev = traj.find_crossings(0, &g);
        assert!(!ev.is_empty());
        for e in ev {
            let u = Vec3::from_slice(&traj.state_at(e.t)[0..3]);
            let b = branch_classify(u, &p, &level).unwrap();
            assert!(b.value.abs() <= 1e-6 * b.k_diag.max_abs(), "{b:?}");
        }
    }
}
