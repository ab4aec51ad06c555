//! Seeded problem instances shared by the benchmarks.

use quatfact_core::init::InitBundle;
use quatfact_core::sampling::factorizable_pure;
use quatfact_core::{AdmmState, FactorPair, QMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Exactly factorizable `m x n` pure-imaginary data with rank `l`, plus the
/// seeded initial factors.
pub fn instance(m: usize, n: usize, l: usize, seed: u64) -> (QMatrix, FactorPair, AdmmState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, _, _) = factorizable_pure(&mut rng, m, n, l);
    let bundle = InitBundle::draw(seed, m, n, l);
    let pair = bundle.quaternion_pair();
    let state = bundle.quaternion_admm(0.01, 0.01).expect("positive penalties");
    (x, pair, state)
}
