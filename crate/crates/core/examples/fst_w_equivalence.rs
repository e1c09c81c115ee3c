//! The wide teacher's two reductions, stepping with the mean gradient or
//! averaging the virtual weights, give bitwise identical parameters.

use fst_lab::fst::{mean_of_virtual_weights, step_with_mean_gradient};
use fst_lab::{build, ModelSpec, ParamVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> fst_lab::Result<()> {
    let (_, theta) = build(&ModelSpec::two_moons_mlp(), 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 2..=5 {
        let grads: Vec<ParamVector> = (0..n)
            .map(|_| {
                let values = (0..theta.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                ParamVector::from_values(theta.layout().clone(), values)
            })
            .collect::<fst_lab::Result<_>>()?;
        let a = step_with_mean_gradient(&theta, &grads, 0.1)?;
        let b = mean_of_virtual_weights(&theta, &grads, 0.1)?;
        let same = a
            .values()
            .iter()
            .zip(b.values())
            .all(|(x, y)| x.to_bits() == y.to_bits());
        println!("N = {n}: bitwise equal = {same}");
    }
    Ok(())
}
