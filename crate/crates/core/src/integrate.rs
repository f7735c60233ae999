//! Numerical flows, dense output, time reparametrization and the flow
//! commutation harness.

use crate::error::{Error, Result};
use crate::fields::{EtaExtField, VectorField, XiExtField};
use crate::model::{x_form, BodyParams, ExtendedState};
use crate::vecrot::Vec3;
use serde::{Deserialize, Serialize};

/// Step selection scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    /// Classical fourth-order Runge–Kutta with a fixed step.
    Rk4 { step: f64 },
    /// Dormand–Prince 5(4) with error control.
    Dopri5 { atol: f64, rtol: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub method: Method,
    pub max_steps: usize,
    /// Accepted steps between calls to [`VectorField::project`]; 0 disables.
    pub projection_interval: usize,
    pub h_init: Option<f64>,
    pub h_max: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig::adaptive(1e-10, 1e-10)
    }
}

impl IntegratorConfig {
    pub fn adaptive(atol: f64, rtol: f64) -> Self {
        IntegratorConfig {
            method: Method::Dopri5 { atol, rtol },
            max_steps: 5_000_000,
            projection_interval: 1,
            h_init: None,
            h_max: None,
        }
    }

    pub fn rk4(step: f64) -> Self {
        IntegratorConfig { method: Method::Rk4 { step }, ..IntegratorConfig::default() }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = Some(h_max);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.method {
            Method::Rk4 { step } => step > 0.0 && step.is_finite(),
            Method::Dopri5 { atol, rtol } => atol > 0.0 && rtol >= 0.0 && atol.is_finite() && rtol.is_finite(),
        };
        if !ok || self.max_steps == 0 || self.h_max.is_some_and(|h| h <= 0.0) {
            return Err(Error::Config(format!("invalid integrator settings: {self:?}")));
        }
        Ok(())
    }
}

/// A sign change of an event function located along a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    /// Index of the event function.
    pub index: usize,
    /// +1 for an upward crossing, −1 for a downward one.
    pub direction: i8,
    /// Index of the accepted step containing the crossing.
    pub segment: usize,
}

/// Accepted steps of an integration with cubic Hermite dense output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub dy: Vec<Vec<f64>>,
    pub method: Method,
    pub accepted: usize,
    pub rejected: usize,
    /// Largest normalized local error estimate among accepted steps.
    pub max_error_norm: f64,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.y[0].len()
    }

    pub fn t0(&self) -> f64 {
        self.t[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn end(&self) -> &[f64] {
        self.y.last().unwrap()
    }

    /// Index k with t[k] ≤ t ≤ t[k+1], clamped to the stored range.
    pub fn segment_of(&self, t: f64) -> usize {
        let n = self.t.len();
        if n < 2 {
            return 0;
        }
        let k = self.t.partition_point(|&s| s <= t);
        k.clamp(1, n - 1) - 1
    }

    /// Hermite interpolant on segment k at time t.
    pub fn hermite(&self, k: usize, t: f64) -> Vec<f64> {
        if self.t.len() < 2 {
            return self.y[0].clone();
        }
        let (t0, t1) = (self.t[k], self.t[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (h00, h10) = (2.0 * s.powi(3) - 3.0 * s * s + 1.0, s.powi(3) - 2.0 * s * s + s);
        let (h01, h11) = (-2.0 * s.powi(3) + 3.0 * s * s, s.powi(3) - s * s);
        let (y0, y1, d0, d1) = (&self.y[k], &self.y[k + 1], &self.dy[k], &self.dy[k + 1]);
        (0..y0.len())
            .map(|i| h00 * y0[i] + h10 * h * d0[i] + h01 * y1[i] + h11 * h * d1[i])
            .collect()
    }

    /// Dense output at time t.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        self.hermite(self.segment_of(t), t)
    }

    /// Locates sign changes of `g(t, y)` between accepted steps, refined by
    /// bisection on the Hermite interpolant.
    pub fn find_crossings(&self, index: usize, g: &dyn Fn(f64, &[f64]) -> f64) -> Vec<Event> {
        let mut out = Vec::new();
        if self.t.len() < 2 {
            return out;
        }
        let mut g_prev = g(self.t[0], &self.y[0]);
        for k in 0..self.t.len() - 1 {
            let g_next = g(self.t[k + 1], &self.y[k + 1]);
            if g_prev != 0.0 && (g_next == 0.0 || g_prev.signum() != g_next.signum()) {
                let (mut lo, mut hi) = (self.t[k], self.t[k + 1]);
                let g_lo = g_prev;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let gm = g(mid, &self.hermite(k, mid));
                    if gm == 0.0 {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if gm.signum() == g_lo.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(Event {
                    t: 0.5 * (lo + hi),
                    index,
                    direction: if g_lo < 0.0 { 1 } else { -1 },
                    segment: k,
                });
            }
            g_prev = g_next;
        }
        out
    }

    /// Samples at the given times by dense output.
    pub fn resample(&self, times: &[f64]) -> Vec<Vec<f64>> {
        times.iter().map(|&t| self.state_at(t)).collect()
    }
}

const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Difference between the fifth- and fourth-order weights.
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn eval_checked(field: &dyn VectorField, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
    field.eval(y, dy);
    if dy.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { t })
    }
}

struct Stats {
    accepted: usize,
    rejected: usize,
    max_err: f64,
}

/// Drives the stepper, reporting every accepted point (including the first).
fn run(
    field: &dyn VectorField,
    y0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    on_step: &mut dyn FnMut(f64, &[f64], &[f64]),
) -> Result<Stats> {
    cfg.validate()?;
    let n = field.dim();
    if y0.len() != n {
        return Err(Error::Precondition(format!("state has length {} but field {} has dimension {n}", y0.len(), field.name())));
    }
    if !(t1 >= t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::Precondition(format!("need t1 >= t0, got [{t0}, {t1}]")));
    }
    if !y0.iter().all(|x| x.is_finite()) {
        return Err(Error::Precondition("initial state is not finite".into()));
    }
    let mut y = y0.to_vec();
    let mut f = vec![0.0; n];
    eval_checked(field, t0, &y, &mut f)?;
    on_step(t0, &y, &f);
    let mut stats = Stats { accepted: 0, rejected: 0, max_err: 0.0 };
    if t1 == t0 {
        return Ok(stats);
    }
    match cfg.method {
        Method::Rk4 { step } => rk4_loop(field, &mut y, &mut f, t0, t1, step, cfg, &mut stats, on_step)?,
        Method::Dopri5 { atol, rtol } => {
            dopri_loop(field, &mut y, &mut f, t0, t1, atol, rtol, cfg, &mut stats, on_step)?
        }
    }
    Ok(stats)
}

#[allow(clippy::too_many_arguments)]
fn rk4_loop(
    field: &dyn VectorField,
    y: &mut Vec<f64>,
    f: &mut Vec<f64>,
    t0: f64,
    t1: f64,
    step: f64,
    cfg: &IntegratorConfig,
    stats: &mut Stats,
    on_step: &mut dyn FnMut(f64, &[f64], &[f64]),
) -> Result<()> {
    let n = y.len();
    let nsteps = ((t1 - t0) / step - 1e-9).ceil().max(1.0) as usize;
    if nsteps > cfg.max_steps {
        return Err(Error::StepLimit { t: t0, steps: cfg.max_steps });
    }
    let (mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut t = t0;
    for s in 0..nsteps {
        let t_next = if s + 1 == nsteps { t1 } else { t0 + (s + 1) as f64 * step };
        let h = t_next - t;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * f[i];
        }
        eval_checked(field, t + 0.5 * h, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        eval_checked(field, t + 0.5 * h, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        eval_checked(field, t + h, &tmp, &mut k4)?;
        for i in 0..n {
            y[i] += h / 6.0 * (f[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t = t_next;
        stats.accepted += 1;
        if cfg.projection_interval > 0 && stats.accepted % cfg.projection_interval == 0 {
            field.project(y);
        }
        eval_checked(field, t, y, f)?;
        on_step(t, y, f);
    }
    Ok(())
}

fn error_scale(atol: f64, rtol: f64, a: f64, b: f64) -> f64 {
    atol + rtol * a.abs().max(b.abs())
}

fn rms(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    (v.map(|x| x * x).sum::<f64>() / n as f64).sqrt()
}

#[allow(clippy::too_many_arguments)]
fn initial_step(field: &dyn VectorField, y: &[f64], f: &[f64], t0: f64, atol: f64, rtol: f64, span: f64) -> Result<f64> {
    let n = y.len();
    let d0 = rms((0..n).map(|i| y[i] / error_scale(atol, rtol, y[i], 0.0)), n);
    let d1 = rms((0..n).map(|i| f[i] / error_scale(atol, rtol, y[i], 0.0)), n);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1: Vec<f64> = (0..n).map(|i| y[i] + h0 * f[i]).collect();
    let mut f1 = vec![0.0; n];
    eval_checked(field, t0 + h0, &y1, &mut f1)?;
    let d2 = rms((0..n).map(|i| (f1[i] - f[i]) / error_scale(atol, rtol, y[i], 0.0)), n) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    Ok((100.0 * h0).min(h1).min(span))
}

#[allow(clippy::too_many_arguments)]
fn dopri_loop(
    field: &dyn VectorField,
    y: &mut Vec<f64>,
    f: &mut Vec<f64>,
    t0: f64,
    t1: f64,
    atol: f64,
    rtol: f64,
    cfg: &IntegratorConfig,
    stats: &mut Stats,
    on_step: &mut dyn FnMut(f64, &[f64], &[f64]),
) -> Result<()> {
    let n = y.len();
    let span = t1 - t0;
    let h_max = cfg.h_max.unwrap_or(span).min(span);
    let mut h = match cfg.h_init {
        Some(h) => h,
        None => initial_step(field, y, f, t0, atol, rtol, span)?,
    }
    .min(h_max);
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut t = t0;
    let mut last_rejected = false;
    while t < t1 {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(Error::StepLimit { t, steps: cfg.max_steps });
        }
        let mut hit_end = false;
        if t + h >= t1 || t + 1.01 * h >= t1 {
            h = t1 - t;
            hit_end = true;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t });
        }
        k[0].copy_from_slice(f);
        for s in 1..7 {
            let (done, rest) = k.split_at_mut(s);
            for i in 0..n {
                let acc: f64 = done.iter().enumerate().map(|(r, kr)| DP_A[s][r] * kr[i]).sum();
                tmp[i] = y[i] + h * acc;
            }
            eval_checked(field, t + DP_C[s] * h, &tmp, &mut rest[0])?;
            if s == 6 {
                y_new.copy_from_slice(&tmp);
            }
        }
        let err = rms(
            (0..n).map(|i| {
                let e: f64 = (0..7).map(|s| DP_E[s] * k[s][i]).sum::<f64>() * h;
                e / error_scale(atol, rtol, y[i], y_new[i])
            }),
            n,
        );
        if !err.is_finite() {
            return Err(Error::NonFinite { t });
        }
        if err <= 1.0 {
            t = if hit_end { t1 } else { t + h };
            y.copy_from_slice(&y_new);
            f.copy_from_slice(&k[6]);
            stats.accepted += 1;
            stats.max_err = stats.max_err.max(err);
            if cfg.projection_interval > 0 && stats.accepted % cfg.projection_interval == 0 {
                field.project(y);
                eval_checked(field, t, y, f)?;
            }
            on_step(t, y, f);
            let mut fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(h_max);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            last_rejected = true;
        }
    }
    Ok(())
}

/// Integrates `field` from `y0` over [t0, t1], keeping every accepted step.
pub fn integrate(
    field: &dyn VectorField,
    y0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let (mut ts, mut ys, mut dys) = (Vec::new(), Vec::new(), Vec::new());
    let stats = run(field, y0, t0, t1, cfg, &mut |t, y, dy| {
        ts.push(t);
        ys.push(y.to_vec());
        dys.push(dy.to_vec());
    })?;
    Ok(Trajectory {
        t: ts,
        y: ys,
        dy: dys,
        method: cfg.method,
        accepted: stats.accepted,
        rejected: stats.rejected,
        max_error_norm: stats.max_err,
        events: Vec::new(),
    })
}

/// As [`integrate`], recording sign changes of each event function.
pub fn integrate_with_events(
    field: &dyn VectorField,
    y0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    events: &[&dyn Fn(f64, &[f64]) -> f64],
) -> Result<Trajectory> {
    let mut traj = integrate(field, y0, t0, t1, cfg)?;
    let mut found: Vec<Event> = events.iter().enumerate().flat_map(|(i, g)| traj.find_crossings(i, *g)).collect();
    found.sort_by(|a, b| a.t.total_cmp(&b.t));
    traj.events = found;
    Ok(traj)
}

/// Endpoint of the flow after time t, without storing intermediate steps.
pub fn flow(field: &dyn VectorField, y0: &[f64], t: f64, cfg: &IntegratorConfig) -> Result<Vec<f64>> {
    let mut last = y0.to_vec();
    run(field, y0, 0.0, t, cfg, &mut |_, y, _| last.copy_from_slice(y))?;
    Ok(last)
}

/// Visits every accepted step without storing the trajectory.
pub fn integrate_visit(
    field: &dyn VectorField,
    y0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    visit: &mut dyn FnMut(f64, &[f64], &[f64]),
) -> Result<usize> {
    run(field, y0, t0, t1, cfg, visit).map(|s| s.accepted)
}

/// dτ/dt = X(u)^{−1/2}.
pub fn reparam_factor(u: Vec3, params: &BodyParams) -> Result<f64> {
    let x = x_form(u, params);
    if !(x > 0.0) {
        return Err(Error::Precondition(format!("X(u) = {x} is not positive")));
    }
    Ok(x.powf(-0.5))
}

/// ‖φ_ξ^t ∘ φ_η^s (x) − φ_η^s ∘ φ_ξ^t (x)‖ for the extended fields.
pub fn commutation_defect(
    ext0: &ExtendedState,
    t: f64,
    s: f64,
    params: &BodyParams,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let xi = XiExtField { params: *params };
    let eta = EtaExtField { params: *params };
    let x0 = ext0.to_flat();
    let a = flow(&xi, &flow(&eta, &x0, s, cfg)?, t, cfg)?;
    let b = flow(&eta, &flow(&xi, &x0, t, cfg)?, s, cfg)?;
    Ok(a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
}

/// The base field together with its linearization acting on an n×n matrix Φ.
///
/// The state is (y, Φ) with Φ stored row-major; Df·Φ is evaluated column by
/// column with central differences.
pub struct VariationalField<F> {
    pub base: F,
    pub fd_step: f64,
}

impl<F: VectorField> VariationalField<F> {
    pub fn new(base: F) -> Self {
        VariationalField { base, fd_step: 1e-6 }
    }

    /// (y0, identity) in the flat layout.
    pub fn initial(&self, y0: &[f64]) -> Vec<f64> {
        let n = self.base.dim();
        let mut out = y0.to_vec();
        out.extend((0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }));
        out
    }

    /// Splits a flat state into (y, Φ rows).
    pub fn split(&self, y: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.base.dim();
        (y[..n].to_vec(), (0..n).map(|i| y[n + i * n..n + (i + 1) * n].to_vec()).collect())
    }
}

impl<F: VectorField> VectorField for VariationalField<F> {
    fn dim(&self) -> usize {
        let n = self.base.dim();
        n + n * n
    }
    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let n = self.base.dim();
        let (x, phi) = y.split_at(n);
        self.base.eval(x, &mut dy[..n]);
        let (mut fp, mut fm, mut xp, mut xm) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for c in 0..n {
            let norm = (0..n).map(|r| phi[r * n + c].powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 {
                for r in 0..n {
                    dy[n + r * n + c] = 0.0;
                }
                continue;
            }
            let h = self.fd_step / norm;
            for r in 0..n {
                xp[r] = x[r] + h * phi[r * n + c];
                xm[r] = x[r] - h * phi[r * n + c];
            }
            self.base.eval(&xp, &mut fp);
            self.base.eval(&xm, &mut fm);
            for r in 0..n {
                dy[n + r * n + c] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
    }
    fn name(&self) -> &str {
        "variational"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{full_from_flat, full_to_flat, FnField, FullField};
    use crate::model::{extend, FullState, PairState};
    use crate::vecrot::{exp_rot, hat, Mat3, Rotation};

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn oscillator() -> FnField<impl Fn(&[f64], &mut [f64]) + Sync> {
        FnField::new(2, "osc", |y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        })
    }

    #[test]
    fn rk4_is_exact_on_constant_fields() {
        let c = [1.5, -0.25, 3.0];
        let field = FnField::new(3, "const", move |_y: &[f64], dy: &mut [f64]| dy.copy_from_slice(&c));
        let traj = integrate(&field, &[1.0, 2.0, 3.0], 0.0, 2.0, &IntegratorConfig::rk4(0.1)).unwrap();
        let expect = [1.0 + 3.0, 2.0 - 0.5, 3.0 + 6.0];
        assert!(max_diff(traj.end(), &expect) < 1e-13);
        assert!(traj.t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rk4_order_is_four() {
        let exact = [1.0f64.cos(), -(1.0f64.sin())];
        let e1 = max_diff(&flow(&oscillator(), &[1.0, 0.0], 1.0, &IntegratorConfig::rk4(0.1)).unwrap(), &exact);
        let e2 = max_diff(&flow(&oscillator(), &[1.0, 0.0], 1.0, &IntegratorConfig::rk4(0.05)).unwrap(), &exact);
        let ratio = e1 / e2;
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn dopri_meets_tolerance_on_oscillator() {
        let y = flow(&oscillator(), &[1.0, 0.0], 10.0, &IntegratorConfig::adaptive(1e-12, 1e-12)).unwrap();
        assert!(max_diff(&y, &[10.0f64.cos(), -(10.0f64.sin())]) < 1e-10);
    }

    #[test]
    fn flow_identity_and_semigroup() {
        let cfg = IntegratorConfig::adaptive(1e-12, 1e-12);
        let y0 = [0.3, 0.7];
        assert_eq!(flow(&oscillator(), &y0, 0.0, &cfg).unwrap(), y0.to_vec());
        let a = flow(&oscillator(), &flow(&oscillator(), &y0, 1.0, &cfg).unwrap(), 1.0, &cfg).unwrap();
        let b = flow(&oscillator(), &y0, 2.0, &cfg).unwrap();
        assert!(max_diff(&a, &b) < 1e-9);
    }

    #[test]
    fn rotation_flow_matches_rodrigues() {
        let w = Vec3::new(0.4, -1.1, 0.7);
        let field = FnField::new(9, "rot", move |y: &[f64], dy: &mut [f64]| {
            dy.copy_from_slice(&(Mat3::from_flat(y) * hat(w)).to_flat())
        });
        let y = flow(&field, &Mat3::IDENTITY.to_flat(), 2.5, &IntegratorConfig::adaptive(1e-13, 1e-13)).unwrap();
        let exact = exp_rot(w, 2.5);
        assert!(max_diff(&y, &exact.matrix().to_flat()) < 1e-10);
    }

    #[test]
    fn full_field_equilibrium_is_preserved() {
        let p = BodyParams::stb();
        let y0 = full_to_flat(&FullState::new(Rotation::IDENTITY, Vec3::E3), 0.0);
        let y = flow(&FullField::new(p), &y0, 10.0, &IntegratorConfig::default()).unwrap();
        assert!((full_from_flat(&y).omega - Vec3::E3).max_abs() < 1e-10);
    }

    #[test]
    fn dense_output_and_crossings() {
        let traj = integrate(&oscillator(), &[1.0, 0.0], 0.0, 7.0, &IntegratorConfig::adaptive(1e-10, 1e-10)).unwrap();
        let mid = traj.state_at(2.0);
        assert!((mid[0] - 2.0f64.cos()).abs() < 1e-6);
        let ev = traj.find_crossings(0, &|_, y| y[0]);
        let roots: Vec<f64> = ev.iter().map(|e| e.t).collect();
        assert_eq!(roots.len(), 2);
        assert!((roots[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
        assert!((roots[1] - 1.5 * std::f64::consts::PI).abs() < 1e-6);
        assert_eq!((ev[0].direction, ev[1].direction), (-1, 1));
    }

    #[test]
    fn reparam_factor_examples() {
        let p = BodyParams::stb();
        assert!((reparam_factor(Vec3::E2, &p).unwrap() - 1.5f64.sqrt()).abs() < 1e-15);
        let sphere = BodyParams::new(Vec3::new(2.0, 2.0, 2.0), 1.0, 1.0).unwrap();
        let a = reparam_factor(Vec3::E1, &sphere).unwrap();
        let b = reparam_factor(Vec3::new(0.6, 0.0, 0.8), &sphere).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(reparam_factor(Vec3::E1, &BodyParams::formal(Vec3::new(-0.5, 1.0, 1.0), 1.0, 1.0)).is_err());
    }

    #[test]
    fn commutation_defect_examples() {
        let p = BodyParams::stb();
        let pair = PairState { u: Vec3::E2, v: Vec3::new(2.4f64.sqrt(), 0.0, 1.6f64.sqrt()) };
        let x = extend(&pair, 0.8, &p, 1.0).unwrap();
        let cfg = IntegratorConfig::adaptive(1e-12, 1e-12);
        assert_eq!(commutation_defect(&x, 0.0, 0.0, &p, &cfg).unwrap(), 0.0);
        assert!(commutation_defect(&x, 0.0, 0.7, &p, &cfg).unwrap() < 1e-14);
        assert!(commutation_defect(&x, 0.5, 0.5, &p, &cfg).unwrap() < 1e-6);
    }

    #[test]
    fn variational_matches_linear_flow() {
        let v = VariationalField::new(oscillator());
        let y = flow(&v, &v.initial(&[1.0, 0.0]), 1.0, &IntegratorConfig::adaptive(1e-12, 1e-12)).unwrap();
        let (_, phi) = v.split(&y);
        let (c, s) = (1.0f64.cos(), 1.0f64.sin());
        assert!(max_diff(&phi[0], &[c, s]) < 1e-9 && max_diff(&phi[1], &[-s, c]) < 1e-9);
    }

    #[test]
    fn rejects_bad_spans_and_configs() {
        let cfg = IntegratorConfig::default();
        assert!(integrate(&oscillator(), &[1.0, 0.0], 1.0, 0.0, &cfg).is_err());
        assert!(integrate(&oscillator(), &[1.0], 0.0, 1.0, &cfg).is_err());
        assert!(integrate(&oscillator(), &[1.0, 0.0], 0.0, 1.0, &IntegratorConfig::rk4(-1.0)).is_err());
        let mut tight = cfg;
        tight.max_steps = 3;
        assert!(matches!(integrate(&oscillator(), &[1.0, 0.0], 0.0, 100.0, &tight), Err(Error::StepLimit { .. })));
        let blow = FnField::new(1, "blow", |y: &[f64], dy: &mut [f64]| dy[0] = if y[0] > 2.0 { f64::NAN } else { 1.0 });
        assert!(matches!(integrate(&blow, &[0.0], 0.0, 5.0, &cfg), Err(Error::NonFinite { .. })));
    }
}
