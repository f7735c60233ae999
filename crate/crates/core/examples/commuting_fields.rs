//! The extended fields ξ and η on ℝ⁸: flow commutation, pointwise bracket and
//! conservation of the six quadratic invariants.

use chaplygin::fields::{f_invariants, lie_bracket_fd, EtaExtField, XiExtField};
use chaplygin::integrate::{commutation_defect, flow, IntegratorConfig};
use chaplygin::model::{extend, BodyParams, ExtendedState, PairState};
use chaplygin::vecrot::Vec3;

fn main() -> chaplygin::error::Result<()> {
    let p = BodyParams::stb();
    let pair = PairState { u: Vec3::E2, v: Vec3::new(2.4f64.sqrt(), 0.0, 1.6f64.sqrt()) };
    let x = extend(&pair, 0.8, &p, 1.0)?;
    let cfg = IntegratorConfig::adaptive(1e-12, 1e-12);
    for (t, s) in [(0.5, 0.5), (1.0, 2.0)] {
        println!("defect(t={t}, s={s}) = {:.3e}", commutation_defect(&x, t, s, &p, &cfg)?);
    }
    let br = lie_bracket_fd(&XiExtField { params: p }, &EtaExtField { params: p }, &x.to_flat(), 1e-5);
    println!("max |[xi, eta]| = {:.3e}", br.iter().fold(0.0f64, |m, b| m.max(b.abs())));
    let f0 = f_invariants(&x, &p);
    let y = flow(&XiExtField { params: p }, &x.to_flat(), 3.0, &cfg)?;
    let f1 = f_invariants(&ExtendedState::from_flat(&y), &p);
    for k in 0..6 {
        println!("f{} = {:+.12} -> {:+.12}", k + 1, f0[k], f1[k]);
    }
    Ok(())
}
