//! Flat `key = value` experiment files.
//!
//! ```text
//! # comments start with '#'
//! task = grid-seg
//! variant = fst-d
//! k = 3
//! seeds = 1, 2, 3
//! ```
//!
//! Keys are applied on top of the task's defaults; later assignments (CLI
//! flags) override earlier ones. [`ExperimentPlan::canonical`] prints every
//! resolved key in a fixed order, so the hash of a plan does not depend on
//! how its file was written.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::ExperimentPlan;
use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::selftrain::{LambdaPolicy, TrainerConfig};
use crate::tasks::{TaskKind, TaskSpec};

pub const KEYS: &[&str] = &[
    "task",
    "variant",
    "k",
    "n",
    "mu",
    "mu_prime",
    "tau",
    "lr",
    "iters",
    "seeds",
    "batch_mode",
    "batch_size",
    "eval_every",
    "class_mix",
    "lambda",
    "resample_augmentation",
    "wide_reduction",
    "hidden",
    "n_labeled",
    "n_unlabeled",
    "n_eval",
    "noise",
    "shift",
    "height",
    "width",
    "num_classes",
    "shapes_per_image",
    "min_size",
    "max_size",
    "class_weights",
    "record_wall_time",
    "out",
];

/// Ordered assignments collected from a file and from overrides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = ConfigMap::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected `key = value`", no + 1))
            })?;
            let key = key.trim();
            if map.entries.contains_key(key) {
                return Err(Error::InvalidConfig(format!("line {}: duplicate key `{key}`", no + 1)));
            }
            map.set(key, value.trim())?;
        }
        Ok(map)
    }

    /// Adds or replaces one assignment.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let key = if key == "seed" { "seeds" } else { key };
        if !KEYS.contains(&key) {
            return Err(Error::InvalidConfig(format!("unknown key `{key}`")));
        }
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn to_plan(&self) -> Result<ExperimentPlan> {
        let kind: TaskKind = self.value("task")?.unwrap_or(TaskKind::GridSeg);
        let mut plan = ExperimentPlan::defaults(kind);
        for (key, raw) in &self.entries {
            apply(&mut plan, key, raw)?;
        }
        plan.model = model_for(&plan.task, plan.model.hidden.clone());
        Ok(plan)
    }

    fn value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key).map(|raw| parse(key, raw)).transpose()
    }
}

fn parse<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value `{raw}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|v| parse(key, v.trim())).collect()
}

pub(crate) fn model_for(task: &TaskSpec, hidden: Vec<usize>) -> ModelSpec {
    let mut spec = match task.kind {
        TaskKind::TwoMoons => ModelSpec::two_moons_mlp(),
        TaskKind::GridSeg => ModelSpec::conv_seg(task.height, task.width, 1, task.num_classes),
    };
    spec.num_classes = task.num_classes;
    spec.hidden = hidden;
    spec
}

fn apply(plan: &mut ExperimentPlan, key: &str, raw: &str) -> Result<()> {
    let t: &mut TrainerConfig = &mut plan.trainer;
    let task = &mut plan.task;
    match key {
        "task" => {}
        "variant" => t.variant = parse(key, raw)?,
        "k" => t.k = parse(key, raw)?,
        "n" => t.n = parse(key, raw)?,
        "mu" => t.mu = parse(key, raw)?,
        "mu_prime" => t.mu_prime = parse(key, raw)?,
        "tau" => t.tau = parse(key, raw)?,
        "lr" => t.gamma = parse(key, raw)?,
        "iters" => t.total_iters = parse(key, raw)?,
        "seeds" => plan.seeds = parse_list(key, raw)?,
        "batch_mode" => t.batch_mode = parse(key, raw)?,
        "batch_size" => plan.batch_size = parse(key, raw)?,
        "eval_every" => plan.eval_every = parse(key, raw)?,
        "class_mix" => plan.class_mix = parse(key, raw)?,
        "lambda" => {
            t.lambda_policy = match raw {
                "confidence" => LambdaPolicy::Confidence,
                v => LambdaPolicy::Fixed(parse(key, v)?),
            }
        }
        "resample_augmentation" => t.resample_augmentation = parse(key, raw)?,
        "wide_reduction" => t.wide_reduction = parse(key, raw)?,
        "hidden" => plan.model.hidden = parse_list(key, raw)?,
        "n_labeled" => task.n_labeled = parse(key, raw)?,
        "n_unlabeled" => task.n_unlabeled = parse(key, raw)?,
        "n_eval" => task.n_eval = parse(key, raw)?,
        "noise" => task.noise = parse(key, raw)?,
        "shift" => task.shift = parse(key, raw)?,
        "height" => task.height = parse(key, raw)?,
        "width" => task.width = parse(key, raw)?,
        "num_classes" => task.num_classes = parse(key, raw)?,
        "shapes_per_image" => task.shapes_per_image = parse(key, raw)?,
        "min_size" => task.min_size = parse(key, raw)?,
        "max_size" => task.max_size = parse(key, raw)?,
        "class_weights" => task.class_weights = parse_list(key, raw)?,
        "record_wall_time" => plan.record_wall_time = parse(key, raw)?,
        "out" => plan.out = PathBuf::from(raw),
        other => return Err(Error::InvalidConfig(format!("unknown key `{other}`"))),
    }
    Ok(())
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentPlan {
    /// Every key except `out`, one `key = value` line each, in [`KEYS`] order.
    pub fn canonical(&self) -> String {
        let t = &self.trainer;
        let task = &self.task;
        let lambda = match t.lambda_policy {
            LambdaPolicy::Confidence => "confidence".to_string(),
            LambdaPolicy::Fixed(l) => l.to_string(),
        };
        let values: Vec<(&str, String)> = vec![
            ("task", task.kind.as_str().to_string()),
            ("variant", t.variant.to_string()),
            ("k", t.k.to_string()),
            ("n", t.n.to_string()),
            ("mu", t.mu.to_string()),
            ("mu_prime", t.mu_prime.to_string()),
            ("tau", t.tau.to_string()),
            ("lr", t.gamma.to_string()),
            ("iters", t.total_iters.to_string()),
            ("seeds", join(&self.seeds)),
            ("batch_mode", t.batch_mode.as_str().to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("class_mix", self.class_mix.to_string()),
            ("lambda", lambda),
            ("resample_augmentation", t.resample_augmentation.to_string()),
            ("wide_reduction", t.wide_reduction.as_str().to_string()),
            ("hidden", join(&self.model.hidden)),
            ("n_labeled", task.n_labeled.to_string()),
            ("n_unlabeled", task.n_unlabeled.to_string()),
            ("n_eval", task.n_eval.to_string()),
            ("noise", task.noise.to_string()),
            ("shift", task.shift.to_string()),
            ("height", task.height.to_string()),
            ("width", task.width.to_string()),
            ("num_classes", task.num_classes.to_string()),
            ("shapes_per_image", task.shapes_per_image.to_string()),
            ("min_size", task.min_size.to_string()),
            ("max_size", task.max_size.to_string()),
            ("class_weights", join(&task.class_weights)),
            ("record_wall_time", self.record_wall_time.to_string()),
        ];
        values
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Hex SHA-256 of [`canonical`](Self::canonical).
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
