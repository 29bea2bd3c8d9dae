//! Regenerates the committed Darcy fixtures: a seeded standard-normal draw
//! of the 32 KL coefficients and the matching noiseless observation on the
//! default 512-cell grid.
//!
//! Run with: cargo run -p uki-core --example gen_fixtures --release

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt::Write as _;
use std::path::Path;

use uki_core::forward::{darcy_solve, DarcyConfig};

const SEED: u64 = 2026;

fn write_vector(path: &Path, values: &DVector<f64>) {
    let mut text = String::new();
    for v in values.iter() {
        writeln!(text, "{v:.17e}").unwrap();
    }
    std::fs::write(path, text).unwrap();
    println!("wrote {} ({} values)", path.display(), values.len());
}

fn main() {
    let config = DarcyConfig::default();
    let mut rng = ChaCha12Rng::seed_from_u64(SEED);
    let theta_ref = DVector::from_iterator(
        config.n_kl,
        (0..config.n_kl).map(|_| StandardNormal.sample(&mut rng)),
    );
    let y_ref = darcy_solve(&theta_ref, &config).expect("reference solve");

    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    write_vector(&fixtures.join("darcy_theta_ref.txt"), &theta_ref);
    write_vector(&fixtures.join("darcy_y_ref.txt"), &y_ref);
}
