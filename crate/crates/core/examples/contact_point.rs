//! Linear drift of the contact point and its ergodic average on a
//! horizontal level.

use chaplygin::fields::{full_to_flat, FullField};
use chaplygin::hyperel::{curve_data, translation_laws};
use chaplygin::integrate::{integrate, IntegratorConfig};
use chaplygin::model::{omega_raw, rotation_from_pair, sample_level_pair, BodyParams, FullState, LevelData};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> chaplygin::error::Result<()> {
    let p = BodyParams::stb();
    let level = LevelData::shr();
    let curve = curve_data(&p, &level)?;
    let pair = sample_level_pair(&p, &level, &mut ChaCha8Rng::seed_from_u64(7))?;
    let s0 = FullState::new(rotation_from_pair(&pair, level.j)?, omega_raw(pair.u, pair.v, &p));
    let y0 = full_to_flat(&s0, 0.0);
    let traj = integrate(&FullField::new(p), &y0, 0.0, 20.0, &IntegratorConfig::adaptive(1e-12, 1e-12))?;
    let rep = translation_laws(&traj, false, &p, &level, &curve)?;
    println!("t in [0, {}]: linear law {:.3e}, d p_j identity {:.3e}", rep.t_span, rep.linear_law, rep.dpj_residual);
    let traj = integrate(&FullField::reparametrized(p), &y0, 0.0, 200.0, &IntegratorConfig::adaptive(1e-10, 1e-10))?;
    let rep = translation_laws(&traj, true, &p, &level, &curve)?;
    println!("tau in [0, {}]: average rate {:.3e}", rep.tau_span, rep.average_rate);
    Ok(())
}
