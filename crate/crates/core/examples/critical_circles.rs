//! Critical energies of the principal-axis relative equilibria and the
//! stability of each circle from its monodromy.

use chaplygin::analysis::{circle_monodromy, critical_data};
use chaplygin::integrate::IntegratorConfig;
use chaplygin::model::BodyParams;
use chaplygin::vecrot::Vec3;

fn main() -> chaplygin::error::Result<()> {
    let p = BodyParams::stb();
    for j in [Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 3.0)] {
        println!("j = {:?}", j);
        for c in critical_data(&p, j)? {
            println!("  axis {} iota {:.3} T_crit {:.12}", c.axis + 1, c.iota, c.t_crit);
        }
    }
    let cfg = IntegratorConfig::adaptive(1e-12, 1e-12);
    let j = Vec3::new(0.0, 0.0, 3.0);
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let m = circle_monodromy(&p, j, axis, sign, &cfg)?;
            println!(
                "axis {} sign {:+}: period {:.6} det {:.9} trace {:+.6} {:?}",
                axis + 1,
                sign,
                m.period,
                m.det,
                m.trace,
                m.stability(1e-6)
            );
        }
    }
    Ok(())
}
