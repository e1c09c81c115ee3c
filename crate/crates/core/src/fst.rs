//! Future-looking teacher updates.
//!
//! Every variant first explores one or more *virtual* student states (the
//! gradient steps are computed and cached, never applied to the live
//! student), folds them into the teacher, and then performs exactly one real
//! student update with pseudo-labels from that teacher.
//!
//! | variant    | teacher update                                                        |
//! |------------|-----------------------------------------------------------------------|
//! | `naive`    | `phi' = mu*phi + (1-mu)*(theta - g*grad | phi)`                       |
//! | `improved` | `a = EMA(phi, theta, mu)`; `phi' = mu'*a + (1-mu')*(theta - g*grad | a)` |
//! | `fst-d`    | `K` serial virtual steps with a co-evolving virtual teacher            |
//! | `fst-w`    | `N` one-step explorations from `theta`, averaged                       |

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::Dyadic;
use crate::models::Model;
use crate::params::ParamVector;
use crate::selftrain::{
    ema_update, guided_gradient, real_update, st_step, BatchMode, StepOutcome, StudentState,
    TeacherState, TrainerConfig, Variant, WideReduction,
};
use crate::tasks::{Batch, BatchSampler};

/// Look-ahead copies of the student and teacher.
#[derive(Clone, Debug, PartialEq)]
pub struct VirtualState {
    pub theta: ParamVector,
    pub phi: ParamVector,
    pub k: usize,
}

impl VirtualState {
    /// `theta~ = theta`, `phi~ = mu*phi + (1-mu)*theta`.
    pub fn new(student: &StudentState, teacher: &TeacherState, mu: f64) -> Result<Self> {
        Ok(Self {
            theta: student.params.snapshot(),
            phi: ema_update(&teacher.params, &student.params, mu)?,
            k: 0,
        })
    }

    /// One virtual step: descend on `batch` with labels from `phi~`, then
    /// move `phi~` toward the new `theta~` with momentum `mu_prime`.
    pub fn advance(&mut self, model: &Model, batch: &Batch, cfg: &TrainerConfig) -> Result<()> {
        let loss = guided_gradient(model, &self.theta, &self.phi, batch, cfg)?;
        self.theta = self.theta.descend(&loss.grad, cfg.gamma)?;
        self.phi = ema_update(&self.phi, &self.theta, cfg.mu_prime)?;
        self.k += 1;
        Ok(())
    }
}

/// Batches used for the virtual explorations of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationBatchSet {
    pub batches: Vec<Batch>,
    pub mode: BatchMode,
}

impl ExplorationBatchSet {
    /// `count` copies of the main batch.
    pub fn same(main: &Batch, count: usize) -> Self {
        Self {
            batches: vec![main.clone(); count],
            mode: BatchMode::Same,
        }
    }

    /// The main batch's data with a fresh ClassMix selection per copy.
    pub fn same_resampled<A: Rng>(
        main: &Batch,
        count: usize,
        sampler: &BatchSampler<'_>,
        aug_rng: &mut A,
    ) -> Self {
        let batches = (0..count)
            .map(|_| Batch {
                labeled: main.labeled.clone(),
                unlabeled: main.unlabeled.clone(),
                mix: main
                    .mix
                    .as_ref()
                    .map(|_| sampler.mix_plan(&main.labeled, aug_rng)),
            })
            .collect();
        Self {
            batches,
            mode: BatchMode::Same,
        }
    }

    /// `count` independently drawn batches.
    pub fn different<R: Rng, A: Rng>(
        sampler: &BatchSampler<'_>,
        count: usize,
        rng: &mut R,
        aug_rng: &mut A,
    ) -> Result<Self> {
        let batches = (0..count)
            .map(|_| sampler.draw(rng, aug_rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            batches,
            mode: BatchMode::Different,
        })
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }
}

fn check_pair(student: &StudentState, teacher: &TeacherState) -> Result<()> {
    student.params.check_layout(&teacher.params)
}

/// Teacher EMA toward a single virtual step taken with labels from the old teacher.
pub fn naive_fst_step(
    model: &Model,
    student: &StudentState,
    teacher: &TeacherState,
    main: &Batch,
    cfg: &TrainerConfig,
) -> Result<StepOutcome> {
    check_pair(student, teacher)?;
    let virtual_loss = guided_gradient(model, &student.params, &teacher.params, main, cfg)?;
    let ahead = student.params.descend(&virtual_loss.grad, cfg.gamma)?;
    let next = TeacherState {
        params: ema_update(&teacher.params, &ahead, cfg.mu)?,
    };
    real_update(model, student, next, main, cfg, 1)
}

/// EMA with the current student, then with a one-step virtual student.
pub fn improved_fst_step(
    model: &Model,
    student: &StudentState,
    teacher: &TeacherState,
    main: &Batch,
    cfg: &TrainerConfig,
) -> Result<StepOutcome> {
    check_pair(student, teacher)?;
    let interim = ema_update(&teacher.params, &student.params, cfg.mu)?;
    let virtual_loss = guided_gradient(model, &student.params, &interim, main, cfg)?;
    let ahead = student.params.descend(&virtual_loss.grad, cfg.gamma)?;
    let next = TeacherState {
        params: ema_update(&interim, &ahead, cfg.mu_prime)?,
    };
    real_update(model, student, next, main, cfg, 1)
}

/// `K` serial virtual steps; the final virtual teacher becomes the teacher.
pub fn fst_d_step(
    model: &Model,
    student: &StudentState,
    teacher: &TeacherState,
    main: &Batch,
    ebs: &ExplorationBatchSet,
    cfg: &TrainerConfig,
) -> Result<StepOutcome> {
    check_pair(student, teacher)?;
    if cfg.k < 1 {
        return Err(Error::InvalidConfig("K must be at least 1".into()));
    }
    if ebs.len() != cfg.k {
        return Err(Error::InvalidConfig(format!(
            "fst-d with K = {} got {} exploration batches",
            cfg.k,
            ebs.len()
        )));
    }
    let mut state = VirtualState::new(student, teacher, cfg.mu)?;
    for batch in &ebs.batches {
        state.advance(model, batch, cfg)?;
    }
    let next = TeacherState { params: state.phi };
    real_update(model, student, next, main, cfg, cfg.k)
}

/// `N` one-step explorations from the current student with labels from the
/// current teacher, folded into the teacher on top of the usual EMA.
pub fn fst_w_step(
    model: &Model,
    student: &StudentState,
    teacher: &TeacherState,
    main: &Batch,
    ebs: &ExplorationBatchSet,
    cfg: &TrainerConfig,
) -> Result<StepOutcome> {
    check_pair(student, teacher)?;
    if cfg.n < 1 {
        return Err(Error::InvalidConfig("N must be at least 1".into()));
    }
    if ebs.len() != cfg.n {
        return Err(Error::InvalidConfig(format!(
            "fst-w with N = {} got {} exploration batches",
            cfg.n,
            ebs.len()
        )));
    }
    let grads = ebs
        .batches
        .par_iter()
        .map(|b| guided_gradient(model, &student.params, &teacher.params, b, cfg).map(|l| l.grad))
        .collect::<Result<Vec<_>>>()?;
    let future = match cfg.wide_reduction {
        WideReduction::GradientMean => step_with_mean_gradient(&student.params, &grads, cfg.gamma)?,
        WideReduction::WeightMean => mean_of_virtual_weights(&student.params, &grads, cfg.gamma)?,
    };
    let interim = ema_update(&teacher.params, &student.params, cfg.mu)?;
    let next = TeacherState {
        params: ema_update(&interim, &future, cfg.mu_prime)?,
    };
    real_update(model, student, next, main, cfg, cfg.n)
}

/// `theta - gamma * mean(grads)`, evaluated exactly and rounded once.
pub fn step_with_mean_gradient(
    theta: &ParamVector,
    grads: &[ParamVector],
    gamma: f64,
) -> Result<ParamVector> {
    let n = check_grads(theta, grads)?;
    let lr = Dyadic::from_f64(gamma);
    let values = (0..theta.len())
        .map(|j| {
            let grad_sum = grads
                .iter()
                .fold(Dyadic::zero(), |acc, g| acc.add(&Dyadic::from_f64(g.values()[j])));
            // (n * theta - gamma * sum) / n
            Dyadic::from_f64(theta.values()[j])
                .mul_int(n)
                .sub(&lr.mul(&grad_sum))
                .div_round(n)
        })
        .collect();
    ParamVector::from_values(theta.layout().clone(), values)
}

/// Mean of the `N` virtual weights `theta - gamma * g_i`, each held exactly,
/// rounded once.
pub fn mean_of_virtual_weights(
    theta: &ParamVector,
    grads: &[ParamVector],
    gamma: f64,
) -> Result<ParamVector> {
    let n = check_grads(theta, grads)?;
    let lr = Dyadic::from_f64(gamma);
    let virtual_weights: Vec<Vec<Dyadic>> = grads
        .iter()
        .map(|g| {
            theta
                .values()
                .iter()
                .zip(g.values())
                .map(|(&w, &gj)| Dyadic::from_f64(w).sub(&lr.mul(&Dyadic::from_f64(gj))))
                .collect()
        })
        .collect();
    let values = (0..theta.len())
        .map(|j| {
            virtual_weights
                .iter()
                .fold(Dyadic::zero(), |acc, w| acc.add(&w[j]))
                .div_round(n)
        })
        .collect();
    ParamVector::from_values(theta.layout().clone(), values)
}

fn check_grads(theta: &ParamVector, grads: &[ParamVector]) -> Result<u64> {
    if grads.is_empty() {
        return Err(Error::InvalidConfig("need at least one exploration".into()));
    }
    for g in grads {
        theta.check_layout(g)?;
        if g.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite exploration gradient".into()));
        }
    }
    if !theta.values().iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidConfig("non-finite student weights".into()));
    }
    Ok(grads.len() as u64)
}

/// Dispatches one training step to the configured variant.
///
/// `ebs` is ignored by the variants that explore on the main batch only.
pub fn train_step(
    model: &Model,
    student: &StudentState,
    teacher: &TeacherState,
    main: &Batch,
    ebs: &ExplorationBatchSet,
    cfg: &TrainerConfig,
) -> Result<StepOutcome> {
    match cfg.variant {
        Variant::St => st_step(model, student, teacher, main, cfg),
        Variant::Naive => naive_fst_step(model, student, teacher, main, cfg),
        Variant::Improved => improved_fst_step(model, student, teacher, main, cfg),
        Variant::FstD => fst_d_step(model, student, teacher, main, ebs, cfg),
        Variant::FstW => fst_w_step(model, student, teacher, main, ebs, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build, ModelSpec};
    use crate::tasks::{TaskData, TaskSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        model: Model,
        student: StudentState,
        teacher: TeacherState,
        data: TaskData,
    }

    fn fixture() -> Fixture {
        let spec = TaskSpec {
            n_labeled: 16,
            n_unlabeled: 16,
            n_eval: 4,
            height: 6,
            width: 6,
            max_size: 4,
            ..TaskSpec::grid_seg()
        };
        let data = spec.generate(3).unwrap();
        let mut mspec = ModelSpec::conv_seg(6, 6, 1, 3);
        mspec.hidden = vec![3];
        let (model, theta) = build(&mspec, 1).unwrap();
        let (_, phi) = build(&mspec, 2).unwrap();
        Fixture {
            model,
            student: StudentState::new(theta),
            teacher: TeacherState { params: phi },
            data,
        }
    }

    fn cfg(variant: Variant) -> TrainerConfig {
        TrainerConfig {
            variant,
            gamma: 0.5,
            mu: 0.9,
            mu_prime: 0.8,
            tau: 0.4,
            k: 3,
            n: 3,
            ..TrainerConfig::default()
        }
    }

    fn batches(f: &Fixture, steps: usize, per_step: usize) -> Vec<Vec<Batch>> {
        let sampler = BatchSampler::new(&f.data, 4, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut aug = ChaCha8Rng::seed_from_u64(10);
        (0..steps)
            .map(|_| (0..per_step).map(|_| sampler.draw(&mut rng, &mut aug).unwrap()).collect())
            .collect()
    }

    fn trajectory(f: &Fixture, cfg: &TrainerConfig, batches: &[Vec<Batch>]) -> Vec<(ParamVector, ParamVector)> {
        let (mut s, mut t) = (f.student.clone(), f.teacher.clone());
        batches
            .iter()
            .map(|b| {
                let ebs = ExplorationBatchSet {
                    batches: b[1..].to_vec(),
                    mode: BatchMode::Different,
                };
                let out = train_step(&f.model, &s, &t, &b[0], &ebs, cfg).unwrap();
                s = out.student;
                t = out.teacher;
                (s.params.clone(), t.params.clone())
            })
            .collect()
    }

    fn assert_same(a: &[(ParamVector, ParamVector)], b: &[(ParamVector, ParamVector)]) {
        for ((sa, ta), (sb, tb)) in a.iter().zip(b) {
            assert!(sa.max_abs_diff(sb).unwrap() <= 1e-12);
            assert!(ta.max_abs_diff(tb).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn improved_with_unit_mu_prime_is_st() {
        let f = fixture();
        let b = batches(&f, 10, 1);
        let improved = TrainerConfig { mu_prime: 1.0, ..cfg(Variant::Improved) };
        assert_same(&trajectory(&f, &improved, &b), &trajectory(&f, &cfg(Variant::St), &b));
    }

    #[test]
    fn naive_without_step_is_st() {
        let f = fixture();
        let b = batches(&f, 10, 1);
        let naive = TrainerConfig { gamma: 0.0, ..cfg(Variant::Naive) };
        let st = TrainerConfig { gamma: 0.0, ..cfg(Variant::St) };
        assert_same(&trajectory(&f, &naive, &b), &trajectory(&f, &st, &b));
    }

    #[test]
    fn single_deep_step_on_main_batch_is_improved() {
        let f = fixture();
        let b: Vec<Vec<Batch>> = batches(&f, 10, 1)
            .into_iter()
            .map(|v| vec![v[0].clone(), v[0].clone()])
            .collect();
        let deep = TrainerConfig { k: 1, ..cfg(Variant::FstD) };
        let a = trajectory(&f, &deep, &b);
        let c = trajectory(&f, &cfg(Variant::Improved), &b);
        for ((sa, ta), (sc, tc)) in a.iter().zip(&c) {
            assert!(sa.bitwise_eq(sc) && ta.bitwise_eq(tc));
        }
    }

    #[test]
    fn deep_without_step_has_closed_form() {
        let f = fixture();
        let b = batches(&f, 1, 4);
        let c = TrainerConfig { gamma: 0.0, ..cfg(Variant::FstD) };
        let ebs = ExplorationBatchSet { batches: b[0][1..].to_vec(), mode: BatchMode::Different };
        let out = fst_d_step(&f.model, &f.student, &f.teacher, &b[0][0], &ebs, &c).unwrap();
        let decay = c.mu_prime.powi(3);
        for ((&got, &phi), &theta) in out
            .teacher
            .params
            .values()
            .iter()
            .zip(f.teacher.params.values())
            .zip(f.student.params.values())
        {
            let start = c.mu * phi + (1.0 - c.mu) * theta;
            let want = decay * start + (1.0 - decay) * theta;
            assert!((got - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn wide_reductions_agree_bitwise() {
        let f = fixture();
        for n in 2..=4 {
            let b = batches(&f, 10, n + 1);
            let grad = TrainerConfig { n, ..cfg(Variant::FstW) };
            let weight = TrainerConfig { wide_reduction: WideReduction::WeightMean, ..grad.clone() };
            let a = trajectory(&f, &grad, &b);
            let c = trajectory(&f, &weight, &b);
            for ((sa, ta), (sc, tc)) in a.iter().zip(&c) {
                assert!(sa.bitwise_eq(sc) && ta.bitwise_eq(tc));
            }
        }
    }

    #[test]
    fn wide_on_identical_batches_is_one_exploration() {
        let f = fixture();
        let b = batches(&f, 1, 1);
        let main = &b[0][0];
        let one = TrainerConfig { n: 1, ..cfg(Variant::FstW) };
        let three = TrainerConfig { n: 3, ..cfg(Variant::FstW) };
        let a = fst_w_step(&f.model, &f.student, &f.teacher, main, &ExplorationBatchSet::same(main, 1), &one).unwrap();
        let c = fst_w_step(&f.model, &f.student, &f.teacher, main, &ExplorationBatchSet::same(main, 3), &three).unwrap();
        assert!(a.teacher.params.bitwise_eq(&c.teacher.params));
    }

    #[test]
    fn exploration_never_touches_the_student() {
        let f = fixture();
        let b = batches(&f, 1, 4);
        for v in Variant::ALL {
            let c = cfg(v);
            let ebs = ExplorationBatchSet {
                batches: b[0][1..1 + c.explorations()].to_vec(),
                mode: BatchMode::Different,
            };
            let before = f.student.params.snapshot();
            let out = train_step(&f.model, &f.student, &f.teacher, &b[0][0], &ebs, &c).unwrap();
            assert!(f.student.params.bitwise_eq(&before));
            assert_eq!(out.stats.real_updates, 1);
            assert_eq!(out.student.step, 1);
            // the real update is a single step from the old student
            let g = guided_gradient(&f.model, &before, &out.teacher.params, &b[0][0], &c).unwrap();
            assert!(out.student.params.bitwise_eq(&before.descend(&g.grad, c.gamma).unwrap()));
        }
    }

    #[test]
    fn improved_labels_come_from_interim_teacher() {
        let f = fixture();
        let b = batches(&f, 1, 1);
        let c = cfg(Variant::Improved);
        let out = improved_fst_step(&f.model, &f.student, &f.teacher, &b[0][0], &c).unwrap();
        let interim = ema_update(&f.teacher.params, &f.student.params, c.mu).unwrap();
        let g = guided_gradient(&f.model, &f.student.params, &interim, &b[0][0], &c).unwrap();
        let ahead = f.student.params.descend(&g.grad, c.gamma).unwrap();
        let want = ema_update(&interim, &ahead, c.mu_prime).unwrap();
        assert!(out.teacher.params.bitwise_eq(&want));
    }

    #[test]
    fn batch_count_must_match() {
        let f = fixture();
        let b = batches(&f, 1, 1);
        let ebs = ExplorationBatchSet::same(&b[0][0], 2);
        assert!(fst_d_step(&f.model, &f.student, &f.teacher, &b[0][0], &ebs, &cfg(Variant::FstD)).is_err());
        assert!(fst_w_step(&f.model, &f.student, &f.teacher, &b[0][0], &ebs, &cfg(Variant::FstW)).is_err());
    }

    #[test]
    fn mean_step_on_scalar_by_hand() {
        let mut layout = crate::params::Layout::new();
        layout.push("w", vec![1]);
        let layout = std::sync::Arc::new(layout);
        let theta = ParamVector::from_values(layout.clone(), vec![1.0]).unwrap();
        let grads: Vec<_> = [0.5, 1.5, 4.0]
            .iter()
            .map(|&g| ParamVector::from_values(layout.clone(), vec![g]).unwrap())
            .collect();
        // 1 - 0.25 * (0.5 + 1.5 + 4) / 3 = 0.5
        assert_eq!(step_with_mean_gradient(&theta, &grads, 0.25).unwrap().values(), &[0.5]);
        assert_eq!(mean_of_virtual_weights(&theta, &grads, 0.25).unwrap().values(), &[0.5]);
    }
}
