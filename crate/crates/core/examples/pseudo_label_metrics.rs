//! Confidence-thresholded pseudo-labels and the metrics used to judge them.

use fst_lab::metrics::{miou, pseudo_error_rate};
use fst_lab::selftrain::pseudo_labels_from_probs;
use fst_lab::Tensor;

fn main() -> fst_lab::Result<()> {
    // two 2x2 "images", three classes
    let probs = Tensor::new(
        vec![8, 3],
        vec![
            0.98, 0.01, 0.01, //
            0.10, 0.85, 0.05, //
            0.01, 0.01, 0.98, //
            0.02, 0.97, 0.01, //
            0.40, 0.30, 0.30, //
            0.99, 0.00, 0.01, //
            0.05, 0.05, 0.90, //
            0.01, 0.98, 0.01, //
        ],
    )?;
    let truth = [0, 1, 2, 1, 1, 0, 2, 2];

    let pl = pseudo_labels_from_probs(&probs, 0.968);
    println!("labels {:?}", pl.labels);
    println!("mask   {:?}", pl.mask);
    println!("lambda {}", pl.lambda);
    println!("pseudo-label error {:.4}", pseudo_error_rate(&pl.labels, &truth, 4, 3)?);
    println!("mIoU {:.4}", miou(&pl.labels, &truth, 3)?);
    Ok(())
}
