//! One-step traces on a 1-feature, 2-class linear model, recomputed with
//! closed-form softmax gradients instead of the autodiff engine.

use fst_lab::fst::{fst_d_step, fst_w_step, improved_fst_step, naive_fst_step};
use fst_lab::selftrain::st_step;
use fst_lab::tasks::{LabeledBatch, UnlabeledBatch};
use fst_lab::{
    build, Batch, BatchMode, ExplorationBatchSet, InputShape, ModelKind, ModelSpec, ParamVector,
    StudentState, TeacherState, Tensor, TrainerConfig, Variant,
};

/// `[w0, w1, b0, b1]`, logits `z_c = w_c * x + b_c`.
type P = [f64; 4];

fn probs(p: &P, x: f64) -> [f64; 2] {
    let z = [p[0] * x + p[2], p[1] * x + p[3]];
    let m = z[0].max(z[1]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp()];
    [e[0] / (e[0] + e[1]), e[1] / (e[0] + e[1])]
}

/// Gradient of `-ln p_y` with respect to `[w0, w1, b0, b1]`.
fn ce_grad(p: &P, x: f64, y: usize) -> P {
    let q = probs(p, x);
    let d = [q[0] - f64::from(y == 0), q[1] - f64::from(y == 1)];
    [d[0] * x, d[1] * x, d[0], d[1]]
}

struct Sample {
    xl: f64,
    yl: usize,
    xu: f64,
}

const TAU: f64 = 0.6;

/// Gradient of `CE(x_l, y_l) + lambda * CE(x_u, teacher label)` where the
/// single unlabeled point counts only if the teacher is confident.
fn guided(theta: &P, teacher: &P, s: &Sample) -> P {
    let q = probs(teacher, s.xu);
    let label = usize::from(q[1] > q[0]);
    let lambda = if q[label] > TAU { 1.0 } else { 0.0 };
    let gl = ce_grad(theta, s.xl, s.yl);
    let gu = ce_grad(theta, s.xu, label);
    std::array::from_fn(|i| gl[i] + lambda * gu[i])
}

fn ema(a: &P, b: &P, m: f64) -> P {
    std::array::from_fn(|i| m * a[i] + (1.0 - m) * b[i])
}

fn step(theta: &P, g: &P, lr: f64) -> P {
    std::array::from_fn(|i| theta[i] - lr * g[i])
}

fn batch(s: &Sample) -> Batch {
    Batch {
        labeled: LabeledBatch {
            inputs: Tensor::new(vec![1, 1], vec![s.xl]).unwrap(),
            labels: vec![s.yl],
            indices: vec![0],
        },
        unlabeled: UnlabeledBatch {
            inputs: Tensor::new(vec![1, 1], vec![s.xu]).unwrap(),
            indices: vec![0],
        },
        mix: None,
    }
}

const THETA: P = [0.8, -0.5, 0.1, 0.3];
const PHI: P = [1.5, -1.2, -0.2, 0.4];
const MAIN: Sample = Sample { xl: 0.7, yl: 0, xu: 1.3 };
const EXTRA: [Sample; 2] = [
    Sample { xl: -0.4, yl: 1, xu: 0.9 },
    Sample { xl: 1.1, yl: 0, xu: -1.6 },
];

fn cfg(variant: Variant, k: usize, n: usize) -> TrainerConfig {
    TrainerConfig {
        variant,
        gamma: 0.4,
        mu: 0.7,
        mu_prime: 0.6,
        tau: TAU,
        k,
        n,
        ..TrainerConfig::default()
    }
}

fn setup() -> (fst_lab::Model, StudentState, TeacherState) {
    let spec = ModelSpec {
        kind: ModelKind::Mlp,
        input: InputShape::Features(1),
        hidden: vec![],
        num_classes: 2,
    };
    let (model, template) = build(&spec, 0).unwrap();
    let vec = |v: &P| ParamVector::from_values(template.layout().clone(), v.to_vec()).unwrap();
    (model, StudentState::new(vec(&THETA)), TeacherState { params: vec(&PHI) })
}

fn close(got: &ParamVector, want: &P) {
    for (g, w) in got.values().iter().zip(want) {
        assert!((g - w).abs() <= 1e-14, "{:?} vs {want:?}", got.values());
    }
}

/// The real update every variant ends with.
fn finish(teacher: P) -> (P, P) {
    (step(&THETA, &guided(&THETA, &teacher, &MAIN), 0.4), teacher)
}

#[test]
fn teacher_on_the_unlabeled_point_is_confident() {
    // otherwise the traces below would not exercise the pseudo-label term
    let q = probs(&ema(&PHI, &THETA, 0.7), MAIN.xu);
    assert!(q[0].max(q[1]) > TAU);
}

#[test]
fn st_by_hand() {
    let (model, s, t) = setup();
    let out = st_step(&model, &s, &t, &batch(&MAIN), &cfg(Variant::St, 1, 1)).unwrap();
    let (theta, phi) = finish(ema(&PHI, &THETA, 0.7));
    close(&out.teacher.params, &phi);
    close(&out.student.params, &theta);
}

#[test]
fn naive_by_hand() {
    let (model, s, t) = setup();
    let out = naive_fst_step(&model, &s, &t, &batch(&MAIN), &cfg(Variant::Naive, 1, 1)).unwrap();
    let ahead = step(&THETA, &guided(&THETA, &PHI, &MAIN), 0.4);
    let (theta, phi) = finish(ema(&PHI, &ahead, 0.7));
    close(&out.teacher.params, &phi);
    close(&out.student.params, &theta);
}

#[test]
fn improved_by_hand() {
    let (model, s, t) = setup();
    let out = improved_fst_step(&model, &s, &t, &batch(&MAIN), &cfg(Variant::Improved, 1, 1)).unwrap();
    let interim = ema(&PHI, &THETA, 0.7);
    let ahead = step(&THETA, &guided(&THETA, &interim, &MAIN), 0.4);
    let (theta, phi) = finish(ema(&interim, &ahead, 0.6));
    close(&out.teacher.params, &phi);
    close(&out.student.params, &theta);
}

#[test]
fn deep_two_steps_by_hand() {
    let (model, s, t) = setup();
    let ebs = ExplorationBatchSet {
        batches: EXTRA.iter().map(batch).collect(),
        mode: BatchMode::Different,
    };
    let out = fst_d_step(&model, &s, &t, &batch(&MAIN), &ebs, &cfg(Variant::FstD, 2, 1)).unwrap();
    let mut vphi = ema(&PHI, &THETA, 0.7);
    let mut vtheta = THETA;
    for sample in &EXTRA {
        vtheta = step(&vtheta, &guided(&vtheta, &vphi, sample), 0.4);
        vphi = ema(&vphi, &vtheta, 0.6);
    }
    let (theta, phi) = finish(vphi);
    close(&out.teacher.params, &phi);
    close(&out.student.params, &theta);
}

#[test]
fn wide_two_batches_by_hand() {
    let (model, s, t) = setup();
    let ebs = ExplorationBatchSet {
        batches: EXTRA.iter().map(batch).collect(),
        mode: BatchMode::Different,
    };
    let out = fst_w_step(&model, &s, &t, &batch(&MAIN), &ebs, &cfg(Variant::FstW, 1, 2)).unwrap();
    let g: Vec<P> = EXTRA.iter().map(|b| guided(&THETA, &PHI, b)).collect();
    let mean: P = std::array::from_fn(|i| (g[0][i] + g[1][i]) / 2.0);
    let future = step(&THETA, &mean, 0.4);
    let (theta, phi) = finish(ema(&ema(&PHI, &THETA, 0.7), &future, 0.6));
    close(&out.teacher.params, &phi);
    close(&out.student.params, &theta);
}
