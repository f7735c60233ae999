//! Carries a level with tilted moment to an equivalent horizontal one and
//! checks the invariance of the pencil.

use chaplygin::model::{BodyParams, LevelData};
use chaplygin::reduction::{horizontalize, horizontalize_with, level_values, pencil, Branch};
use chaplygin::vecrot::Vec3;

fn main() -> chaplygin::error::Result<()> {
    let p = BodyParams::stb();
    let level = LevelData::new(Vec3::new(2.0, 0.0, 1.0), 1.0);
    let before = pencil(&level_values(&p, &level));
    println!("pencil roots {:?}", before.roots);
    for branch in [Branch::Plus, Branch::Continuous] {
        let red = horizontalize_with(&p, &level, branch)?;
        let after = pencil(&level_values(&red.params_tilde(), &red.level_tilde()));
        println!("{branch:?}:");
        println!("  M = {:?}", red.coeffs);
        println!("  I~ = {:?} rho~ = {:.9} physical {}", red.inertia_tilde, red.rho_tilde, red.physical);
        println!("  T~ = {:.12} j~ = {:?}", red.energy_tilde, red.j_tilde);
        println!("  pencil roots after {:?}", after.roots);
    }
    let red = horizontalize(&p, &level)?;
    println!("default T~ - (3.5 + sqrt 4.25)/2 = {:.3e}", red.energy_tilde - (3.5 + 4.25f64.sqrt()) / 2.0);
    Ok(())
}
