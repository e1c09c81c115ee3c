#![allow(dead_code)]

use fst_lab::graph::softmax_cross_entropy;
use fst_lab::{build, InputShape, Model, ModelKind, ModelSpec, ParamVector, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A random small model with a random input batch, labels and mask.
pub struct GradCase {
    pub model: Model,
    pub params: ParamVector,
    pub input: Tensor,
    pub labels: Vec<usize>,
    pub mask: Vec<bool>,
}

pub fn random_grad_case(seed: u64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden: Vec<usize> = (0..rng.random_range(0..=2))
        .map(|_| rng.random_range(1..=4))
        .collect();
    let num_classes = rng.random_range(2..=4);
    let (spec, batch) = if rng.random_bool(0.5) {
        let spec = ModelSpec {
            kind: ModelKind::Mlp,
            input: InputShape::Features(rng.random_range(1..=4)),
            hidden,
            num_classes,
        };
        (spec, rng.random_range(1..=4))
    } else {
        let spec = ModelSpec {
            kind: ModelKind::ConvSeg,
            input: InputShape::Image {
                height: rng.random_range(3..=5),
                width: rng.random_range(3..=5),
                channels: rng.random_range(1..=2),
            },
            hidden,
            num_classes,
        };
        (spec, rng.random_range(1..=2))
    };
    let (model, mut params) = build(&spec, rng.random()).unwrap();
    // non-zero biases so no unit sits exactly at a ReLU kink
    for v in params.values_mut() {
        *v += 0.05 * rng.sample::<f64, _>(StandardNormal);
    }
    let (shape, rows) = match spec.input {
        InputShape::Features(d) => (vec![batch, d], batch),
        InputShape::Image {
            height,
            width,
            channels,
        } => (vec![batch, height, width, channels], batch * height * width),
    };
    let len = shape.iter().product();
    let input = Tensor::new(shape, (0..len).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
    let labels = (0..rows).map(|_| rng.random_range(0..num_classes)).collect();
    let mut mask: Vec<bool> = (0..rows).map(|_| rng.random_bool(0.7)).collect();
    mask[0] = true;
    GradCase {
        model,
        params,
        input,
        labels,
        mask,
    }
}

pub fn loss_at(case: &GradCase, params: &ParamVector) -> f64 {
    let logits = case.model.forward(params, &case.input).unwrap();
    softmax_cross_entropy(&logits, &case.labels, &case.mask).unwrap()
}

/// `||g - g_fd|| / max(||g||, ||g_fd||)` with central differences of step `h`.
pub fn fd_relative_error(case: &GradCase, h: f64) -> f64 {
    let (_, grad) = case
        .model
        .loss_and_grad(&case.params, &case.input, &case.labels, &case.mask)
        .unwrap();
    let mut probe = case.params.clone();
    let mut diff2 = 0.0;
    let mut fd2 = 0.0;
    for i in 0..probe.len() {
        let orig = probe.values()[i];
        probe.values_mut()[i] = orig + h;
        let up = loss_at(case, &probe);
        probe.values_mut()[i] = orig - h;
        let down = loss_at(case, &probe);
        probe.values_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        diff2 += (grad.values()[i] - fd).powi(2);
        fd2 += fd * fd;
    }
    let scale = grad.norm().max(fd2.sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff2.sqrt() / scale
    }
}

/// Per-image mean recall by explicit per-class, per-pixel counting.
pub fn brute_pseudo_error(pseudo: &[usize], truth: &[usize], per_image: usize, classes: usize) -> f64 {
    let images = truth.len() / per_image;
    let mut total = 0.0;
    for i in 0..images {
        let mut sum = 0.0;
        let mut present = 0;
        for c in 0..classes {
            let mut count = 0usize;
            let mut correct = 0usize;
            for p in i * per_image..(i + 1) * per_image {
                if truth[p] == c {
                    count += 1;
                    if pseudo[p] == c {
                        correct += 1;
                    }
                }
            }
            if count > 0 {
                sum += correct as f64 / count as f64;
                present += 1;
            }
        }
        total += sum / present as f64;
    }
    1.0 - total / images as f64
}

pub fn brute_miou(pred: &[usize], truth: &[usize], classes: usize) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for c in 0..classes {
        let inter = (0..pred.len()).filter(|&p| pred[p] == c && truth[p] == c).count();
        let union = (0..pred.len()).filter(|&p| pred[p] == c || truth[p] == c).count();
        if union > 0 {
            sum += inter as f64 / union as f64;
            n += 1;
        }
    }
    sum / n as f64
}

/// Fraction of rows whose largest probability is strictly above `tau`.
pub fn brute_lambda(probs: &[f64], classes: usize, tau: f64) -> f64 {
    let rows = probs.len() / classes;
    let mut hits = 0;
    for r in 0..rows {
        let mut best = f64::NEG_INFINITY;
        for c in 0..classes {
            best = best.max(probs[r * classes + c]);
        }
        if best > tau {
            hits += 1;
        }
    }
    hits as f64 / rows as f64
}

/// Random label maps and probability rows for metric checks.
pub fn random_maps(rng: &mut ChaCha8Rng, pixels: usize, classes: usize) -> (Vec<usize>, Vec<usize>) {
    let truth: Vec<usize> = (0..pixels).map(|_| rng.random_range(0..classes)).collect();
    let agree = rng.random_range(0.0..1.0);
    let pred = truth
        .iter()
        .map(|&t| if rng.random_bool(agree) { t } else { rng.random_range(0..classes) })
        .collect();
    (pred, truth)
}

pub fn random_probs(rng: &mut ChaCha8Rng, rows: usize, classes: usize) -> Vec<f64> {
    let sharp = rng.random_range(0.5..8.0);
    let mut out = Vec::with_capacity(rows * classes);
    for _ in 0..rows {
        let logits: Vec<f64> = (0..classes)
            .map(|_| sharp * rng.sample::<f64, _>(StandardNormal))
            .collect();
        out.extend(fst_lab::graph::softmax_rows(&logits, classes));
    }
    out
}
