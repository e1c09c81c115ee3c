//! Datasets are pure functions of their seed, round-trip through the binary
//! format, and any batch can be rebuilt from its indices.

use fst_lab::tasks::{read_dataset, write_dataset, TaskSpec};
use fst_lab::BatchSampler;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fst_lab::Result<()> {
    let spec = TaskSpec::grid_seg();
    let data = spec.generate(42)?;
    assert_eq!(data, spec.generate(42)?);

    let mut bytes = Vec::new();
    write_dataset(&mut bytes, &data.eval)?;
    let back = read_dataset(bytes.as_slice())?;
    println!("eval split: {} items, {} bytes, round trip exact: {}", back.len(), bytes.len(), back == data.eval);

    let sampler = BatchSampler::new(&data, 4, true)?;
    let mut order = ChaCha8Rng::seed_from_u64(1);
    let mut augment = ChaCha8Rng::seed_from_u64(2);
    let batch = sampler.draw(&mut order, &mut augment)?;
    let again = sampler.replay(&batch.labeled.indices, &batch.unlabeled.indices, batch.mix.clone())?;
    println!(
        "labeled ids {:?}, unlabeled ids {:?}, replay identical: {}",
        batch.labeled.indices,
        batch.unlabeled.indices,
        again == batch
    );
    Ok(())
}
