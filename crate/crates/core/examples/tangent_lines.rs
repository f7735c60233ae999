//! Lines tangent to two confocal-type quadrics at points of a level.

use chaplygin::geom::{tangency_data, tangency_residual};
use chaplygin::model::{sample_level_state, BodyParams, LevelData};
use chaplygin::vecrot::Vec3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> chaplygin::error::Result<()> {
    let p = BodyParams::stb();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for level in [LevelData::new(Vec3::new(2.0, 0.0, 1.0), 1.0), LevelData::shr()] {
        let td = tangency_data(&p, level.j, level.energy)?;
        println!("j = {:?} T = {}", level.j, level.energy);
        for r in &td.roots {
            println!("  alpha {:+.12} {:?} quadric {:?} = {:.6}", r.re, r.line, r.quadric, r.level);
        }
        let s = sample_level_state(&p, &level, &mut rng)?;
        let (u, v) = (s.u(), s.a.inv_apply(level.j));
        for k in 0..2 {
            let (base, dir) = td.line(k, u, v).expect("real root");
            let res = tangency_residual(&s.a, td.roots[k].re, &p, level.j, level.energy);
            println!("  line {k}: base {:?} dir {:?} residual {res:.3e}", base, dir);
        }
    }
    Ok(())
}
