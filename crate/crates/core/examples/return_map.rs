//! Section returns and rotation number of a long orbit on a horizontal level.

use chaplygin::fields::PairField;
use chaplygin::hyperel::{build_track, curve_data, near_return, return_map};
use chaplygin::integrate::{integrate, IntegratorConfig};
use chaplygin::model::{extend, BodyParams, LevelData, PairState};
use chaplygin::vecrot::Vec3;

fn main() -> chaplygin::error::Result<()> {
    let p = BodyParams::stb();
    let pair = PairState { u: Vec3::E2, v: Vec3::new(2.4f64.sqrt(), 0.0, 1.6f64.sqrt()) };
    let x = extend(&pair, 0.8, &p, 1.0)?;
    let traj = integrate(&PairField { params: p, weighted: true }, &x.pair().to_flat(), 0.0, 500.0, &IntegratorConfig::adaptive(1e-11, 1e-11))?;
    let curve = curve_data(&p, &LevelData::shr())?;
    let track = build_track(&traj, &p, &curve)?;
    let rm = return_map(&traj, &track, &p, &curve)?;
    println!("section crossings {}", rm.crossings);
    println!("rotation number {:.12}", rm.rotation_number);
    println!("max deviation from rigid rotation {:.3e}", rm.max_deviation);
    match near_return(&traj, 0.5) {
        Some((t, d)) => println!("closest return at tau = {t:.6}, distance {d:.6}"),
        None => println!("no return after tau = 0.5"),
    }
    Ok(())
}
