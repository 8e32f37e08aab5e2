#![allow(dead_code)]

use metastable_mdp::lattice::{Boundary, ModelParams};
use metastable_mdp::solver::{ActionRow, FiniteMdp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense random MDP with `n` states and up to `max_a` actions per state.
pub fn random_mdp(seed: u64, n: usize, max_a: usize, lambda: f64) -> FiniteMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let k = rng.gen_range(1..=max_a);
            (0..k)
                .map(|_| {
                    let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                    let z: f64 = w.iter().sum();
                    ActionRow { reward: rng.gen_range(-1.0..1.0), transitions: w.iter().enumerate().map(|(t, x)| (t, x / z)).collect() }
                })
                .collect()
        })
        .collect();
    FiniteMdp::new(lambda, rows).unwrap()
}

pub fn torus(l: usize) -> ModelParams {
    ModelParams::new(1.0, 1.75, 8.0, l, Boundary::Periodic).unwrap()
}

pub fn open_box(l: usize) -> ModelParams {
    ModelParams::small_box(1.0, 1.75, 8.0, l, Boundary::Open).unwrap()
}
