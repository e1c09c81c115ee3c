//! Reverse-mode gradients of a small MLP against central differences.

use fst_lab::graph::softmax_cross_entropy;
use fst_lab::{build, ModelSpec, Tensor};

fn main() -> fst_lab::Result<()> {
    let (model, params) = build(&ModelSpec::two_moons_mlp(), 7)?;
    let input = Tensor::new(vec![3, 2], vec![0.3, -0.1, 1.2, 0.4, -0.8, 0.9])?;
    let labels = [0, 1, 1];
    let mask = [true; 3];

    let (loss, grad) = model.loss_and_grad(&params, &input, &labels, &mask)?;
    println!("loss {loss:.6}, {} parameters", params.len());

    let h = 1e-6;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..probe.len() {
        let orig = probe.values()[i];
        probe.values_mut()[i] = orig + h;
        let up = softmax_cross_entropy(&model.forward(&probe, &input)?, &labels, &mask)?;
        probe.values_mut()[i] = orig - h;
        let down = softmax_cross_entropy(&model.forward(&probe, &input)?, &labels, &mask)?;
        probe.values_mut()[i] = orig;
        worst = worst.max((grad.values()[i] - (up - down) / (2.0 * h)).abs());
    }
    println!("largest |autodiff - finite difference| = {worst:.2e}");
    Ok(())
}
