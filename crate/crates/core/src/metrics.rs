//! Pseudo-label error rate, mIoU, accuracy, and EMA smoothing of traces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One logged row of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iter: usize,
    pub variant: String,
    pub seed: u64,
    pub student_updates: u64,
    pub loss_labeled: f64,
    pub loss_unlabeled: f64,
    pub lambda_mean: f64,
    pub pseudo_error: f64,
    pub student_eval: f64,
    pub teacher_eval: f64,
    pub wall_ms: u64,
}

impl MetricsRecord {
    pub const FIELDS: [&'static str; 11] = [
        "iter",
        "variant",
        "seed",
        "student_updates",
        "loss_labeled",
        "loss_unlabeled",
        "lambda_mean",
        "pseudo_error",
        "student_eval",
        "teacher_eval",
        "wall_ms",
    ];
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= classes) {
        Some(&l) => Err(Error::InvalidMetric(format!(
            "label {l} out of range for {classes} classes"
        ))),
        None => Ok(()),
    }
}

/// One minus the mean per-class recall of `pseudo` against `truth`.
///
/// Recall is averaged over the classes present in each image (absent
/// classes are skipped), then over images. Each image spans
/// `pixels_per_image` consecutive entries.
pub fn pseudo_error_rate(
    pseudo: &[usize],
    truth: &[usize],
    pixels_per_image: usize,
    classes: usize,
) -> Result<f64> {
    if classes < 2 {
        return Err(Error::InvalidMetric("need at least two classes".into()));
    }
    if pseudo.len() != truth.len() {
        return Err(Error::InvalidMetric(format!(
            "{} predictions for {} labels",
            pseudo.len(),
            truth.len()
        )));
    }
    if truth.is_empty() || pixels_per_image == 0 {
        return Err(Error::InvalidMetric("no ground-truth pixels".into()));
    }
    if !truth.len().is_multiple_of(pixels_per_image) {
        return Err(Error::InvalidMetric(format!(
            "{} pixels do not split into images of {pixels_per_image}",
            truth.len()
        )));
    }
    check_labels(pseudo, classes)?;
    check_labels(truth, classes)?;
    let mut total = 0.0;
    let mut images = 0usize;
    let mut hits = vec![0usize; classes];
    let mut counts = vec![0usize; classes];
    for (p_img, t_img) in pseudo.chunks(pixels_per_image).zip(truth.chunks(pixels_per_image)) {
        hits.fill(0);
        counts.fill(0);
        for (&p, &t) in p_img.iter().zip(t_img) {
            counts[t] += 1;
            if p == t {
                hits[t] += 1;
            }
        }
        let (sum, present) = hits
            .iter()
            .zip(&counts)
            .filter(|(_, &c)| c > 0)
            .fold((0.0, 0usize), |(s, n), (&h, &c)| (s + h as f64 / c as f64, n + 1));
        total += sum / present as f64;
        images += 1;
    }
    Ok(1.0 - total / images as f64)
}

/// Mean over classes of `|pred & truth| / |pred | truth|`, skipping classes
/// with an empty union.
pub fn miou(pred: &[usize], truth: &[usize], classes: usize) -> Result<f64> {
    if classes < 2 {
        return Err(Error::InvalidMetric("need at least two classes".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::InvalidMetric(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidMetric("empty input".into()));
    }
    check_labels(pred, classes)?;
    check_labels(truth, classes)?;
    let mut inter = vec![0usize; classes];
    let mut union = vec![0usize; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            inter[p] += 1;
            union[p] += 1;
        } else {
            union[p] += 1;
            union[t] += 1;
        }
    }
    let (sum, n) = inter
        .iter()
        .zip(&union)
        .filter(|(_, &u)| u > 0)
        .fold((0.0, 0usize), |(s, n), (&i, &u)| (s + i as f64 / u as f64, n + 1));
    Ok(sum / n as f64)
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() || truth.is_empty() {
        return Err(Error::InvalidMetric("accuracy needs equal, non-empty inputs".into()));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Exponential moving average of a stream, started at its first value.
pub fn ema_trace(values: &[f64], momentum: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::InvalidMetric(format!("momentum {momentum} outside [0, 1)")));
    }
    let mut out = Vec::with_capacity(values.len());
    let mut state = None;
    for &v in values {
        let next = match state {
            None => v,
            Some(s) => s + (1.0 - momentum) * (v - s),
        };
        out.push(next);
        state = Some(next);
    }
    Ok(out)
}
