//! One training step of every variant from the same starting point.
//!
//! All variants apply exactly one update to the student; they differ in how
//! far the teacher looks ahead and how many gradients that costs.

use fst_lab::harness::{stream_rng, ExperimentPlan, Stream};
use fst_lab::{
    build, train_step, BatchSampler, ExplorationBatchSet, StudentState, TaskKind,
    TeacherState, Variant,
};

fn main() -> fst_lab::Result<()> {
    let plan = ExperimentPlan::defaults(TaskKind::GridSeg);
    let data = plan.task.generate(1)?;
    let (model, theta) = build(&plan.model, 2)?;
    let student = StudentState::new(theta);
    let teacher = TeacherState::from_student(&student);
    let sampler = BatchSampler::new(&data, plan.batch_size, true)?;
    let main = sampler.draw(&mut stream_rng(0, Stream::Order), &mut stream_rng(0, Stream::Augment))?;

    for variant in Variant::ALL {
        let cfg = fst_lab::TrainerConfig {
            variant,
            tau: 0.5,
            ..plan.trainer.clone()
        };
        let ebs = ExplorationBatchSet::same(&main, cfg.explorations());
        let out = train_step(&model, &student, &teacher, &main, &ebs, &cfg)?;
        let drift = out
            .teacher
            .params
            .values()
            .iter()
            .zip(teacher.params.values())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        println!(
            "{:<9} teacher moved {drift:.3e}  virtual grads {}  real updates {}  lambda {:.2}",
            variant.as_str(),
            out.stats.virtual_gradients,
            out.stats.real_updates,
            out.stats.lambda
        );
    }
    Ok(())
}
