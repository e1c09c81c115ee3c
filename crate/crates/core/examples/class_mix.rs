//! ClassMix on one labeled/unlabeled pair of a generated grid task.

use fst_lab::tasks::{class_mix, TaskSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Class digits, with `.` for pixels outside `keep`.
fn show(title: &str, labels: &[usize], keep: &[bool], width: usize) {
    println!("{title}");
    for (row, keep) in labels.chunks(width).zip(keep.chunks(width)) {
        let line: String = row
            .iter()
            .zip(keep)
            .map(|(c, k)| if *k { char::from(b'0' + *c as u8) } else { '.' })
            .collect();
        println!("  {line}");
    }
}

fn main() -> fst_lab::Result<()> {
    let spec = TaskSpec::grid_seg();
    let data = spec.generate(5)?;
    let (src, tgt) = (&data.labeled, &data.unlabeled);
    // pretend the teacher predicts background everywhere
    let pseudo = vec![0; tgt.rows_per_item()];

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mixed = class_mix(src.item_inputs(0), src.item_labels(0), tgt.item_inputs(0), &pseudo, &mut rng);

    let all = vec![true; mixed.pasted.len()];
    show("source labels", src.item_labels(0), &all, spec.width);
    show("pasted pixels", &mixed.labels, &mixed.pasted, spec.width);
    let pasted = mixed.pasted.iter().filter(|p| **p).count();
    println!("{pasted} of {} pixels pasted", mixed.pasted.len());
    Ok(())
}
