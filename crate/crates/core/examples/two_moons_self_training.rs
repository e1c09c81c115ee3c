//! Self-training on two moons with eight labels: the mean-teacher baseline
//! next to the deep future teacher.

use fst_lab::harness::{train_replicate, ExperimentPlan};
use fst_lab::{TaskKind, Variant};

fn main() -> fst_lab::Result<()> {
    let mut plan = ExperimentPlan::defaults(TaskKind::TwoMoons);
    plan.trainer.total_iters = 400;
    plan.trainer.gamma = 0.2;
    plan.trainer.mu = 0.99;
    plan.trainer.mu_prime = 0.99;
    plan.trainer.tau = 0.9;
    plan.eval_every = 100;

    for variant in [Variant::St, Variant::FstD] {
        plan.trainer.variant = variant;
        println!("{variant}");
        for row in train_replicate(&plan, 0)? {
            println!(
                "  iter {:>4}  student acc {:.3}  teacher acc {:.3}  pseudo-error {:.3}  lambda {:.2}",
                row.iter, row.student_eval, row.teacher_eval, row.pseudo_error, row.lambda_mean
            );
        }
    }
    Ok(())
}
