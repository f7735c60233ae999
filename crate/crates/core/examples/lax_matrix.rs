//! The matrix B along an orbit: its traces stay constant.

use chaplygin::fields::BField;
use chaplygin::integrate::{integrate, IntegratorConfig};
use chaplygin::model::{sample_level_state, BodyParams, LevelData};
use chaplygin::reduction::{b_matrix, b_traces};
use chaplygin::vecrot::Mat3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> chaplygin::error::Result<()> {
    let p = BodyParams::stb();
    let level = LevelData::shr();
    let s = sample_level_state(&p, &level, &mut ChaCha8Rng::seed_from_u64(42))?;
    let (b0, _) = b_matrix(&s.a, &p, &level);
    let tr0 = b_traces(&b0);
    println!("traces of B, B^2, B^3 at t = 0: {:?}", tr0);
    let traj = integrate(&BField { params: p, j: level.j }, &b0.to_flat(), 0.0, 10.0, &IntegratorConfig::adaptive(1e-12, 1e-12))?;
    let mut drift: f64 = 0.0;
    for y in &traj.y {
        let tr = b_traces(&Mat3::from_flat(y));
        drift = drift.max((0..3).map(|k| (tr[k] - tr0[k]).abs()).fold(0.0, f64::max));
    }
    println!("traces at t = 10: {:?}", b_traces(&Mat3::from_flat(traj.end())));
    println!("max trace drift {drift:.3e}");
    Ok(())
}
