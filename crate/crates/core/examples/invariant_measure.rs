//! Divergence of X(u)^{-1/2} ξ and X(u)^{-1/2} η on the (u, v) space.

use chaplygin::fields::{divergence_probe, PairEtaField, PairField};
use chaplygin::model::{sample_level_pair, x_form, BodyParams, LevelData};
use chaplygin::vecrot::Vec3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> chaplygin::error::Result<()> {
    let p = BodyParams::stb();
    let level = LevelData::shr();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let w = |y: &[f64]| x_form(Vec3::from_slice(&y[0..3]), &p).powf(-0.5);
    let one = |_: &[f64]| 1.0;
    let (mut dx, mut de, mut raw): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..50 {
        let y = sample_level_pair(&p, &level, &mut rng)?.to_flat();
        let xi = PairField { params: p, weighted: false };
        dx = dx.max(divergence_probe(&xi, &y, &w, 1e-5).abs());
        de = de.max(divergence_probe(&PairEtaField { params: p, weighted: false }, &y, &w, 1e-5).abs());
        raw = raw.max(divergence_probe(&xi, &y, &one, 1e-5).abs());
    }
    println!("max |div(w xi)|  = {dx:.3e}");
    println!("max |div(w eta)| = {de:.3e}");
    println!("max |div(xi)|    = {raw:.3e}  (unweighted, for comparison)");
    Ok(())
}
