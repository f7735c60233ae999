//! Integrates a rolling orbit and reports the drift of j, T and ⟨u,u⟩.

use chaplygin::fields::{full_from_flat, full_to_flat, FullField};
use chaplygin::integrate::{integrate, IntegratorConfig};
use chaplygin::model::{kinetic_forms, moment_and_energy, BodyParams, FullState};
use chaplygin::vecrot::{Rotation, Vec3};

fn main() -> chaplygin::error::Result<()> {
    let p = BodyParams::stb();
    let s0 = FullState::new(Rotation::from_axis_angle(Vec3::new(1.0, 1.0, 0.0).normalized(), 0.7), Vec3::new(0.3, -0.8, 1.1));
    let (j0, t0) = moment_and_energy(&s0, &p);
    println!("j0 = {:?}, T0 = {t0:.6}", j0);
    let traj = integrate(&FullField::new(p), &full_to_flat(&s0, 0.0), 0.0, 20.0, &IntegratorConfig::adaptive(1e-11, 1e-11))?;
    let (mut dj, mut dt, mut du, mut df): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for y in &traj.y {
        let s = full_from_flat(y);
        let (j, t) = moment_and_energy(&s, &p);
        dj = dj.max((j - j0).max_abs());
        dt = dt.max((t - t0).abs());
        du = du.max((s.u().norm2() - 1.0).abs());
        df = df.max(kinetic_forms(s.u(), s.a.inv_apply(j), t, &p).f.abs());
    }
    println!("steps accepted {} rejected {}", traj.accepted, traj.rejected);
    println!("max |j - j0| = {dj:.3e}");
    println!("max |T - T0| = {dt:.3e}");
    println!("max |<u,u> - 1| = {du:.3e}");
    println!("max |F| = {df:.3e}");
    let end = full_from_flat(traj.end());
    println!("u(20) = {:?}", end.u());
    Ok(())
}
