//! Experiment runner: plans, seeding, the training loop, CSV and manifest
//! output, and the `compare` / `export_curves` reports.

mod config;
mod csv;
mod report;

pub use config::{ConfigMap, KEYS};
pub use csv::{read_records, write_records, CSV_SCHEMA};
pub use report::{compare, export_curves, Comparison, ComparisonRow, CURVE_SERIES};

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fst::{train_step, ExplorationBatchSet};
use crate::graph::softmax_cross_entropy;
use crate::metrics::{accuracy, miou, pseudo_error_rate, MetricsRecord};
use crate::models::{build, InputShape, Model, ModelSpec};
use crate::params::ParamVector;
use crate::selftrain::{
    pseudo_labels_from_probs, BatchMode, StudentState, TeacherState, TrainerConfig, Variant,
};
use crate::tasks::{BatchSampler, DataSet, TaskData, TaskKind, TaskSpec};

pub const MANIFEST_VERSION: u32 = 1;

/// Independent random streams derived from one replicate seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Task = 2,
    Order = 3,
    Augment = 4,
    Explore = 5,
    ExploreAugment = 6,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub trainer: TrainerConfig,
    pub task: TaskSpec,
    pub model: ModelSpec,
    pub eval_every: usize,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    pub batch_size: usize,
    /// Paste half the classes of each labeled image onto its unlabeled partner.
    pub class_mix: bool,
    /// Log real elapsed time; off by default so CSVs are byte-reproducible.
    pub record_wall_time: bool,
}

impl ExperimentPlan {
    pub fn defaults(kind: TaskKind) -> Self {
        let task = match kind {
            TaskKind::TwoMoons => TaskSpec::two_moons(),
            TaskKind::GridSeg => TaskSpec::grid_seg(),
        };
        let hidden = match kind {
            TaskKind::TwoMoons => vec![16, 16],
            TaskKind::GridSeg => vec![8, 8],
        };
        Self {
            trainer: TrainerConfig {
                total_iters: 200,
                ..TrainerConfig::default()
            },
            model: config::model_for(&task, hidden),
            eval_every: 10,
            out: PathBuf::from("runs"),
            seeds: vec![0],
            batch_size: 8,
            class_mix: kind == TaskKind::GridSeg,
            record_wall_time: false,
            task,
        }
    }

    pub fn from_config_text(text: &str) -> Result<Self> {
        ConfigMap::parse(text)?.to_plan()
    }

    /// Everything that can be checked without training.
    pub fn validate(&self) -> Result<()> {
        self.trainer.validate()?;
        self.task.validate()?;
        self.model.validate()?;
        if self.model.input != self.task.input_shape() || self.model.num_classes != self.task.num_classes {
            return Err(Error::Incompatible("model does not match the task's inputs".into()));
        }
        if self.eval_every == 0 || !self.trainer.total_iters.is_multiple_of(self.eval_every) {
            return Err(Error::InvalidConfig(format!(
                "eval_every {} must be positive and divide iters {}",
                self.eval_every, self.trainer.total_iters
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("no seeds".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::InvalidConfig("duplicate seeds".into()));
        }
        if self.batch_size == 0
            || self.batch_size > self.task.n_labeled
            || self.batch_size > self.task.n_unlabeled
        {
            return Err(Error::InvalidConfig(format!(
                "batch_size {} must be in 1..={}",
                self.batch_size,
                self.task.n_labeled.min(self.task.n_unlabeled)
            )));
        }
        if self.class_mix && self.task.kind != TaskKind::GridSeg {
            return Err(Error::InvalidConfig("class_mix needs an image task".into()));
        }
        Ok(())
    }

    /// CSV file name for one replicate.
    pub fn csv_name(&self, seed: u64) -> String {
        format!("{}_seed{seed}.csv", self.trainer.variant)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out.join(format!("{}_manifest.json", self.trainer.variant))
    }
}

/// Whole-split quantities logged at each evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub loss_labeled: f64,
    pub loss_unlabeled: f64,
    pub lambda_mean: f64,
    pub pseudo_error: f64,
    pub student_eval: f64,
    pub teacher_eval: f64,
}

fn eval_score(model: &Model, params: &ParamVector, set: &DataSet) -> Result<f64> {
    let pred = model.forward(params, &set.all_inputs()?)?.argmax_rows();
    match model.spec().input {
        InputShape::Features(_) => accuracy(&pred, &set.labels),
        InputShape::Image { .. } => miou(&pred, &set.labels, model.num_classes()),
    }
}

/// Losses, pseudo-label quality and eval scores on the full splits.
///
/// Pseudo-labels come from the teacher on the whole unlabeled split and are
/// scored against its hidden ground truth.
pub fn evaluate(
    model: &Model,
    student: &StudentState,
    teacher: &TeacherState,
    data: &TaskData,
    tau: f64,
) -> Result<Evaluation> {
    let labeled_logits = model.forward(&student.params, &data.labeled.all_inputs()?)?;
    let all = vec![true; data.labeled.labels.len()];
    let loss_labeled = softmax_cross_entropy(&labeled_logits, &data.labeled.labels, &all)?;

    let x_u = data.unlabeled.all_inputs()?;
    let pl = pseudo_labels_from_probs(&model.predict(&teacher.params, &x_u)?, tau);
    let student_logits = model.forward(&student.params, &x_u)?;
    let loss_unlabeled = softmax_cross_entropy(&student_logits, &pl.labels, &pl.mask)?;
    let per_image = match model.spec().input {
        InputShape::Features(_) => pl.len(),
        InputShape::Image { .. } => model.rows_per_item(),
    };
    let pseudo_error =
        pseudo_error_rate(&pl.labels, &data.unlabeled.labels, per_image, model.num_classes())?;
    Ok(Evaluation {
        loss_labeled,
        loss_unlabeled,
        lambda_mean: pl.lambda,
        pseudo_error,
        student_eval: eval_score(model, &student.params, &data.eval)?,
        teacher_eval: eval_score(model, &teacher.params, &data.eval)?,
    })
}

/// Trains one replicate in memory and returns its metric rows.
pub fn train_replicate(plan: &ExperimentPlan, seed: u64) -> Result<Vec<MetricsRecord>> {
    plan.validate()?;
    let cfg = TrainerConfig {
        seed,
        ..plan.trainer.clone()
    };
    let data = plan.task.generate(stream_rng(seed, Stream::Task).random())?;
    let (model, theta0) = build(&plan.model, stream_rng(seed, Stream::Init).random())?;
    let sampler = BatchSampler::new(&data, plan.batch_size, plan.class_mix)?;
    let mut order = stream_rng(seed, Stream::Order);
    let mut augment = stream_rng(seed, Stream::Augment);
    let mut explore = stream_rng(seed, Stream::Explore);
    let mut explore_aug = stream_rng(seed, Stream::ExploreAugment);

    let mut student = StudentState::new(theta0);
    let mut teacher = TeacherState::from_student(&student);
    let started = Instant::now();
    let record = |iter: usize, student: &StudentState, teacher: &TeacherState| -> Result<MetricsRecord> {
        let e = evaluate(&model, student, teacher, &data, cfg.tau)?;
        Ok(MetricsRecord {
            iter,
            variant: cfg.variant.to_string(),
            seed,
            student_updates: student.step,
            loss_labeled: e.loss_labeled,
            loss_unlabeled: e.loss_unlabeled,
            lambda_mean: e.lambda_mean,
            pseudo_error: e.pseudo_error,
            student_eval: e.student_eval,
            teacher_eval: e.teacher_eval,
            wall_ms: if plan.record_wall_time {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
        })
    };

    let mut rows = vec![record(0, &student, &teacher)?];
    for iter in 1..=cfg.total_iters {
        let main = sampler.draw(&mut order, &mut augment)?;
        let count = cfg.explorations();
        let ebs = match cfg.batch_mode {
            _ if count == 0 => ExplorationBatchSet::same(&main, 0),
            BatchMode::Same if cfg.resample_augmentation && sampler.class_mix() => {
                ExplorationBatchSet::same_resampled(&main, count, &sampler, &mut explore_aug)
            }
            BatchMode::Same => ExplorationBatchSet::same(&main, count),
            BatchMode::Different => {
                ExplorationBatchSet::different(&sampler, count, &mut explore, &mut explore_aug)?
            }
        };
        let outcome = train_step(&model, &student, &teacher, &main, &ebs, &cfg)?;
        student = outcome.student;
        teacher = outcome.teacher;
        if iter % plan.eval_every == 0 {
            rows.push(record(iter, &student, &teacher)?);
        }
    }
    Ok(rows)
}

/// One replicate's entry in a manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub seed: u64,
    pub csv: String,
    pub rows: usize,
    pub student_updates: u64,
    pub final_student_eval: f64,
    pub final_teacher_eval: f64,
    pub final_pseudo_error: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub csv_schema: String,
    pub crate_version: String,
    pub config_hash: String,
    pub config: String,
    pub variant: Variant,
    pub task: TaskSpec,
    pub model: ModelSpec,
    pub replicates: Vec<ReplicateSummary>,
    pub wall_ms: u64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Writes to `path.tmp` and renames, removing the temporary on failure.
fn write_atomically(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let result = write(&tmp).and_then(|_| fs::rename(&tmp, path).map_err(Error::from));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Trains every seed of `plan`, writing one CSV per seed and a manifest.
///
/// The plan is validated before any training starts. Seeds run in parallel
/// and are fully independent, so the output does not depend on scheduling.
pub fn run(plan: &ExperimentPlan) -> Result<RunManifest> {
    plan.validate()?;
    fs::create_dir_all(&plan.out)?;
    let started = Instant::now();
    let replicates = plan
        .seeds
        .par_iter()
        .map(|&seed| {
            let t0 = Instant::now();
            let rows = train_replicate(plan, seed)?;
            let csv = plan.csv_name(seed);
            write_atomically(&plan.out.join(&csv), |p| write_records(p, &rows))?;
            let last = rows.last().expect("iteration 0 is always logged");
            Ok(ReplicateSummary {
                seed,
                csv,
                rows: rows.len(),
                student_updates: last.student_updates,
                final_student_eval: last.student_eval,
                final_teacher_eval: last.teacher_eval,
                final_pseudo_error: last.pseudo_error,
                wall_ms: t0.elapsed().as_millis() as u64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        csv_schema: CSV_SCHEMA.to_string(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: plan.config_hash(),
        config: plan.canonical(),
        variant: plan.trainer.variant,
        task: plan.task.clone(),
        model: plan.model.clone(),
        replicates,
        wall_ms: started.elapsed().as_millis() as u64,
    };
    write_atomically(&plan.manifest_path(), |p| {
        Ok(fs::write(p, serde_json::to_string_pretty(&manifest)? + "\n")?)
    })?;
    Ok(manifest)
}
