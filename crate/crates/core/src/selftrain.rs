//! Mean-teacher self-training: EMA teacher, confidence-thresholded
//! pseudo-labels, the dynamic unlabeled-loss weight, and the classical step
//! in which the teacher is updated first and then labels the batch for the
//! student.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;
use crate::params::ParamVector;
use crate::tasks::{mix_item, paste_mask, Batch, LabeledBatch, UnlabeledBatch};
use crate::tensor::Tensor;

/// Teacher-update rule used by a trainer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Classical self-training.
    #[serde(rename = "st")]
    St,
    /// Teacher EMA toward the one-step virtual student only.
    #[serde(rename = "naive")]
    Naive,
    /// EMA with the current student, then with the one-step virtual student.
    #[serde(rename = "improved")]
    Improved,
    /// `K` serial virtual steps with a co-evolving virtual teacher.
    #[serde(rename = "fst-d")]
    FstD,
    /// `N` parallel one-step explorations averaged into the teacher.
    #[serde(rename = "fst-w")]
    FstW,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::St,
        Variant::Naive,
        Variant::Improved,
        Variant::FstD,
        Variant::FstW,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::St => "st",
            Variant::Naive => "naive",
            Variant::Improved => "improved",
            Variant::FstD => "fst-d",
            Variant::FstW => "fst-w",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant `{s}`")))
    }
}

/// Where exploration batches come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchMode {
    Same,
    Different,
}

impl std::str::FromStr for BatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same" => Ok(BatchMode::Same),
            "different" => Ok(BatchMode::Different),
            other => Err(Error::InvalidConfig(format!("unknown batch mode `{other}`"))),
        }
    }
}

impl BatchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BatchMode::Same => "same",
            BatchMode::Different => "different",
        }
    }
}

/// How the wide variant folds its `N` explorations into the teacher.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WideReduction {
    /// Average the gradients, then take one virtual step.
    GradientMean,
    /// Take `N` virtual steps, then average the resulting weights.
    WeightMean,
}

impl WideReduction {
    pub fn as_str(self) -> &'static str {
        match self {
            WideReduction::GradientMean => "gradient-mean",
            WideReduction::WeightMean => "weight-mean",
        }
    }
}

impl std::str::FromStr for WideReduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient-mean" => Ok(WideReduction::GradientMean),
            "weight-mean" => Ok(WideReduction::WeightMean),
            other => Err(Error::InvalidConfig(format!("unknown reduction `{other}`"))),
        }
    }
}

/// Weight of the unlabeled loss term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LambdaPolicy {
    /// Fraction of unlabeled pixels whose teacher confidence exceeds `tau`;
    /// only those pixels contribute to the unlabeled loss.
    Confidence,
    /// A fixed weight; every unlabeled pixel contributes.
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub mu: f64,
    pub mu_prime: f64,
    pub tau: f64,
    pub k: usize,
    pub n: usize,
    pub variant: Variant,
    pub batch_mode: BatchMode,
    pub total_iters: usize,
    pub seed: u64,
    pub lambda_policy: LambdaPolicy,
    /// In `same` mode, draw a fresh ClassMix selection for each exploration
    /// instead of reusing the main batch's.
    pub resample_augmentation: bool,
    pub wide_reduction: WideReduction,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            mu: 0.999,
            mu_prime: 0.999,
            tau: 0.968,
            k: 3,
            n: 3,
            variant: Variant::St,
            batch_mode: BatchMode::Same,
            total_iters: 1000,
            seed: 0,
            lambda_policy: LambdaPolicy::Confidence,
            resample_augmentation: false,
            wide_reduction: WideReduction::GradientMean,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return bad("mu must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.mu_prime) {
            return bad("mu_prime must lie in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if self.k < 1 {
            return bad("K must be at least 1");
        }
        if self.n < 1 {
            return bad("N must be at least 1");
        }
        if let LambdaPolicy::Fixed(l) = self.lambda_policy {
            if !(0.0..=1.0).contains(&l) {
                return bad("fixed lambda must lie in [0, 1]");
            }
        }
        Ok(())
    }

    /// Number of exploration batches the configured variant consumes per step.
    pub fn explorations(&self) -> usize {
        match self.variant {
            Variant::St | Variant::Naive | Variant::Improved => 0,
            Variant::FstD => self.k,
            Variant::FstW => self.n,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudentState {
    pub params: ParamVector,
    /// Real (non-virtual) updates applied so far.
    pub step: u64,
}

impl StudentState {
    pub fn new(params: ParamVector) -> Self {
        Self { params, step: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TeacherState {
    pub params: ParamVector,
}

impl TeacherState {
    /// The teacher starts as a copy of the student.
    pub fn from_student(student: &StudentState) -> Self {
        Self {
            params: student.params.snapshot(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabels {
    pub labels: Vec<usize>,
    pub confidence: Vec<f64>,
    pub mask: Vec<bool>,
    pub lambda: f64,
}

impl PseudoLabels {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn refresh_lambda(&mut self) {
        let hits = self.mask.iter().filter(|&&m| m).count();
        self.lambda = if self.mask.is_empty() {
            0.0
        } else {
            hits as f64 / self.mask.len() as f64
        };
    }
}

/// `m * phi + (1 - m) * theta`.
pub fn ema_update(phi: &ParamVector, theta: &ParamVector, m: f64) -> Result<ParamVector> {
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::InvalidConfig(format!("momentum {m} outside [0, 1]")));
    }
    phi.ema(theta, m)
}

/// Hard labels and confidence mask from teacher probabilities.
pub fn pseudo_labels_from_probs(probs: &Tensor, tau: f64) -> PseudoLabels {
    let labels = probs.argmax_rows();
    let c = probs.last_dim();
    let confidence: Vec<f64> = probs
        .data()
        .chunks(c)
        .zip(&labels)
        .map(|(row, &l)| row[l])
        .collect();
    let mask = confidence.iter().map(|&p| p > tau).collect();
    let mut pl = PseudoLabels {
        labels,
        confidence,
        mask,
        lambda: 0.0,
    };
    pl.refresh_lambda();
    pl
}

/// Teacher predictions on `x_u`; no parameter is touched.
pub fn make_pseudo_labels(
    model: &Model,
    teacher: &TeacherState,
    x_u: &UnlabeledBatch,
    tau: f64,
) -> Result<PseudoLabels> {
    let probs = model.predict(&teacher.params, &x_u.inputs)?;
    Ok(pseudo_labels_from_probs(&probs, tau))
}

/// The unlabeled half of a batch as the student sees it: possibly
/// ClassMix-ed, with the matching pseudo-labels and weight.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledTargets {
    pub batch: UnlabeledBatch,
    pub pseudo: PseudoLabels,
}

/// Pseudo-labels `batch` with `teacher` and applies the batch's mix plan.
///
/// Pasted pixels carry source ground truth and count as confident.
pub fn unlabeled_targets(
    model: &Model,
    teacher: &ParamVector,
    batch: &Batch,
    tau: f64,
    policy: LambdaPolicy,
) -> Result<UnlabeledTargets> {
    let probs = model.predict(teacher, &batch.unlabeled.inputs)?;
    let mut pseudo = pseudo_labels_from_probs(&probs, tau);
    let mut unlabeled = batch.unlabeled.clone();
    if let Some(plan) = &batch.mix {
        let items = batch.unlabeled.len();
        if plan.selected.len() != items || batch.labeled.len() != items {
            return Err(Error::InvalidConfig(
                "mix plan must pair every labeled item with an unlabeled one".into(),
            ));
        }
        let rows = pseudo.len() / items.max(1);
        let values = unlabeled.inputs.len() / items.max(1);
        for (i, selected) in plan.selected.iter().enumerate() {
            let r = i * rows..(i + 1) * rows;
            let v = i * values..(i + 1) * values;
            let src_labels = &batch.labeled.labels[r.clone()];
            let pasted = paste_mask(src_labels, selected);
            let mixed = mix_item(
                &batch.labeled.inputs.data()[v.clone()],
                src_labels,
                &batch.unlabeled.inputs.data()[v.clone()],
                &pseudo.labels[r.clone()],
                &pasted,
            );
            unlabeled.inputs.data_mut()[v].copy_from_slice(&mixed.input);
            pseudo.labels[r.clone()].copy_from_slice(&mixed.labels);
            for (j, on) in pasted.into_iter().enumerate() {
                if on {
                    pseudo.confidence[r.start + j] = 1.0;
                    pseudo.mask[r.start + j] = true;
                }
            }
        }
        pseudo.refresh_lambda();
    }
    if let LambdaPolicy::Fixed(l) = policy {
        pseudo.mask.iter_mut().for_each(|m| *m = true);
        pseudo.lambda = l;
    }
    Ok(UnlabeledTargets {
        batch: unlabeled,
        pseudo,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombinedLoss {
    pub total: f64,
    pub labeled: f64,
    pub unlabeled: f64,
    pub lambda: f64,
    pub grad: ParamVector,
}

/// `CE(labeled) + lambda * CE(unlabeled | pseudo-labels, mask)` and its gradient.
pub fn combined_loss(
    model: &Model,
    student: &ParamVector,
    labeled: &LabeledBatch,
    unlabeled: &UnlabeledBatch,
    pl: &PseudoLabels,
) -> Result<CombinedLoss> {
    if !(0.0..=1.0).contains(&pl.lambda) {
        return Err(Error::InvalidConfig(format!("lambda {} outside [0, 1]", pl.lambda)));
    }
    let all = vec![true; labeled.labels.len()];
    let (loss_l, grad_l) = model.loss_and_grad(student, &labeled.inputs, &labeled.labels, &all)?;
    let (loss_u, grad_u) = model.loss_and_grad(student, &unlabeled.inputs, &pl.labels, &pl.mask)?;
    Ok(CombinedLoss {
        total: loss_l + pl.lambda * loss_u,
        labeled: loss_l,
        unlabeled: loss_u,
        lambda: pl.lambda,
        grad: grad_l.axpy(pl.lambda, &grad_u)?,
    })
}

/// Gradient of the combined loss at `student` with targets from `teacher`.
pub(crate) fn guided_gradient(
    model: &Model,
    student: &ParamVector,
    teacher: &ParamVector,
    batch: &Batch,
    cfg: &TrainerConfig,
) -> Result<CombinedLoss> {
    let targets = unlabeled_targets(model, teacher, batch, cfg.tau, cfg.lambda_policy)?;
    combined_loss(model, student, &batch.labeled, &targets.batch, &targets.pseudo)
}

/// Per-step bookkeeping returned by every variant.
#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    pub loss_labeled: f64,
    pub loss_unlabeled: f64,
    pub lambda: f64,
    /// Gradients evaluated for virtual (exploration) updates.
    pub virtual_gradients: usize,
    /// Gradients applied to the live student; always 1.
    pub real_updates: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub student: StudentState,
    pub teacher: TeacherState,
    pub stats: StepStats,
}

/// The only place the live student is updated: one gradient step on
/// `batch` with pseudo-labels from the already-updated teacher.
pub(crate) fn real_update(
    model: &Model,
    student: &StudentState,
    teacher: TeacherState,
    batch: &Batch,
    cfg: &TrainerConfig,
    virtual_gradients: usize,
) -> Result<StepOutcome> {
    let loss = guided_gradient(model, &student.params, &teacher.params, batch, cfg)?;
    let params = student.params.descend(&loss.grad, cfg.gamma)?;
    Ok(StepOutcome {
        student: StudentState {
            params,
            step: student.step + 1,
        },
        teacher,
        stats: StepStats {
            loss_labeled: loss.labeled,
            loss_unlabeled: loss.unlabeled,
            lambda: loss.lambda,
            virtual_gradients,
            real_updates: 1,
        },
    })
}

fn check_pair(student: &StudentState, teacher: &TeacherState) -> Result<()> {
    student.params.check_layout(&teacher.params)
}

/// Classical step: `phi <- EMA(phi, theta, mu)`, then the student learns
/// from the new teacher's pseudo-labels.
pub fn st_step(
    model: &Model,
    student: &StudentState,
    teacher: &TeacherState,
    batch: &Batch,
    cfg: &TrainerConfig,
) -> Result<StepOutcome> {
    check_pair(student, teacher)?;
    let next = TeacherState {
        params: ema_update(&teacher.params, &student.params, cfg.mu)?,
    };
    real_update(model, student, next, batch, cfg, 0)
}
