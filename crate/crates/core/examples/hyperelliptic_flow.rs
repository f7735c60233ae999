//! Elliptic coordinates along an orbit on a horizontal level: the curve, the
//! C×C residual and the Abel integrals.

use chaplygin::fields::PairField;
use chaplygin::hyperel::{abel_increments, build_track, curve_data, cxc_residual, interval_periods};
use chaplygin::integrate::{integrate, IntegratorConfig};
use chaplygin::model::{sample_level_pair, BodyParams, LevelData};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> chaplygin::error::Result<()> {
    let p = BodyParams::stb();
    let level = LevelData::shr();
    let curve = curve_data(&p, &level)?;
    println!("branch values {:?}", curve.branch_values);
    println!("c^2 = {:.12}, d^2 = {:.12}", curve.c2, curve.d2);
    let pair = sample_level_pair(&p, &level, &mut ChaCha8Rng::seed_from_u64(42))?;
    let traj = integrate(&PairField { params: p, weighted: true }, &pair.to_flat(), 0.0, 20.0, &IntegratorConfig::adaptive(1e-12, 1e-12))?;
    let track = build_track(&traj, &p, &curve)?;
    for (k, iv) in track.intervals.iter().enumerate() {
        let per = interval_periods(&curve, iv);
        println!("lambda{} in [{:.6}, {:.6}] periods {:?}", k + 2, iv.lo, iv.hi, per);
    }
    println!("turning points {}", track.turning.len());
    println!("C x C residual {:.3e}", cxc_residual(&track, &curve)?);
    let abel = abel_increments(&track, &curve);
    println!("beta0 = {:.9} vs c tau = {:.9}", abel.beta0, abel.c_tau);
    println!("max |beta1| = {:.3e}", abel.max_drift1);
    Ok(())
}
