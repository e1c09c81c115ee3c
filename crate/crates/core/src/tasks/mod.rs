//! Synthetic semi-supervised tasks.
//!
//! Each task yields three disjoint splits: a labeled source set, an
//! unlabeled set (drawn from the target distribution when `shift > 0`) and
//! an evaluation set from the same distribution as the unlabeled data. The
//! unlabeled split still carries its ground truth so that pseudo-label
//! quality can be measured, but training only ever sees it through
//! [`UnlabeledBatch`], which has no labels.

mod class_mix;
mod grid_seg;
mod io;
mod two_moons;

pub use class_mix::{class_mix, mix_item, paste_mask, select_classes, MixPlan, MixedItem};
pub use grid_seg::{gen_grid_seg, target_intensity};
pub use io::{read_dataset, read_dataset_file, write_dataset, write_dataset_file, DATASET_MAGIC};
pub use two_moons::gen_two_moons;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::InputShape;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    TwoMoons,
    GridSeg,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::TwoMoons => "two-moons",
            TaskKind::GridSeg => "grid-seg",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-moons" => Ok(TaskKind::TwoMoons),
            "grid-seg" => Ok(TaskKind::GridSeg),
            other => Err(Error::InvalidConfig(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_eval: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    /// Domain shift magnitude; `0` means source and target coincide.
    pub shift: f64,
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub shapes_per_image: usize,
    pub min_size: usize,
    pub max_size: usize,
    /// Relative frequencies of the foreground classes `1..C`.
    pub class_weights: Vec<f64>,
}

impl TaskSpec {
    pub fn two_moons() -> Self {
        Self {
            kind: TaskKind::TwoMoons,
            n_labeled: 8,
            n_unlabeled: 512,
            n_eval: 512,
            noise: 0.1,
            shift: 0.0,
            height: 1,
            width: 1,
            num_classes: 2,
            shapes_per_image: 0,
            min_size: 0,
            max_size: 0,
            class_weights: Vec::new(),
        }
    }

    pub fn grid_seg() -> Self {
        Self {
            kind: TaskKind::GridSeg,
            n_labeled: 32,
            n_unlabeled: 64,
            n_eval: 32,
            noise: 0.08,
            shift: 1.0,
            height: 10,
            width: 10,
            num_classes: 3,
            shapes_per_image: 3,
            min_size: 3,
            max_size: 6,
            class_weights: vec![1.0, 1.0],
        }
    }

    /// Input layout of one item.
    pub fn input_shape(&self) -> InputShape {
        match self.kind {
            TaskKind::TwoMoons => InputShape::Features(2),
            TaskKind::GridSeg => InputShape::Image {
                height: self.height,
                width: self.width,
                channels: 1,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidTask("noise must be finite and non-negative".into()));
        }
        if !(self.shift >= 0.0 && self.shift.is_finite()) {
            return Err(Error::InvalidTask("shift must be finite and non-negative".into()));
        }
        match self.kind {
            TaskKind::TwoMoons => {
                if self.num_classes != 2 {
                    return Err(Error::InvalidTask("two-moons has exactly two classes".into()));
                }
                if self.n_labeled < 4 {
                    return Err(Error::InvalidTask(
                        "two-moons needs at least 2 labeled points per class".into(),
                    ));
                }
            }
            TaskKind::GridSeg => {
                if self.num_classes < 2 {
                    return Err(Error::InvalidTask("need a background and a foreground class".into()));
                }
                if self.height == 0 || self.width == 0 {
                    return Err(Error::InvalidTask("empty grid".into()));
                }
                if self.shapes_per_image > 0 {
                    if self.min_size == 0 || self.min_size > self.max_size {
                        return Err(Error::InvalidTask("need 1 <= min_size <= max_size".into()));
                    }
                    if self.max_size > self.height.min(self.width) {
                        return Err(Error::InvalidTask(format!(
                            "shapes up to {} px do not fit a {}x{} grid",
                            self.max_size, self.height, self.width
                        )));
                    }
                }
                if self.class_weights.len() != self.num_classes - 1 {
                    return Err(Error::InvalidTask(format!(
                        "expected {} foreground class weights, got {}",
                        self.num_classes - 1,
                        self.class_weights.len()
                    )));
                }
                if self.class_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
                    || self.class_weights.iter().sum::<f64>() <= 0.0
                {
                    return Err(Error::InvalidTask("class weights must be non-negative with a positive sum".into()));
                }
            }
        }
        Ok(())
    }

    pub fn generate(&self, split_seed: u64) -> Result<TaskData> {
        match self.kind {
            TaskKind::TwoMoons => gen_two_moons(self, split_seed),
            TaskKind::GridSeg => gen_grid_seg(self, split_seed),
        }
    }
}

/// Which distribution a split was drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

/// A split: inputs and ground truth for a contiguous range of global item ids.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    pub input: InputShape,
    pub num_classes: usize,
    pub first_id: usize,
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
}

impl DataSet {
    pub fn new(input: InputShape, num_classes: usize, first_id: usize) -> Self {
        Self {
            input,
            num_classes,
            first_id,
            inputs: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn values_per_item(&self) -> usize {
        match self.input {
            InputShape::Features(d) => d,
            InputShape::Image {
                height,
                width,
                channels,
            } => height * width * channels,
        }
    }

    pub fn rows_per_item(&self) -> usize {
        match self.input {
            InputShape::Features(_) => 1,
            InputShape::Image { height, width, .. } => height * width,
        }
    }

    pub fn channels(&self) -> usize {
        match self.input {
            InputShape::Features(d) => d,
            InputShape::Image { channels, .. } => channels,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len() / self.rows_per_item().max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> std::ops::Range<usize> {
        self.first_id..self.first_id + self.len()
    }

    pub fn push(&mut self, inputs: &[f64], labels: &[usize]) {
        debug_assert_eq!(inputs.len(), self.values_per_item());
        debug_assert_eq!(labels.len(), self.rows_per_item());
        self.inputs.extend_from_slice(inputs);
        self.labels.extend_from_slice(labels);
    }

    pub fn item_inputs(&self, i: usize) -> &[f64] {
        let v = self.values_per_item();
        &self.inputs[i * v..(i + 1) * v]
    }

    pub fn item_labels(&self, i: usize) -> &[usize] {
        let r = self.rows_per_item();
        &self.labels[i * r..(i + 1) * r]
    }

    pub fn batch_shape(&self, batch: usize) -> Vec<usize> {
        match self.input {
            InputShape::Features(d) => vec![batch, d],
            InputShape::Image {
                height,
                width,
                channels,
            } => vec![batch, height, width, channels],
        }
    }

    fn check_indices(&self, indices: &[usize]) -> Result<()> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidTask(format!(
                "index {bad} out of range for a split of {}",
                self.len()
            )));
        }
        Ok(())
    }

    fn gather_inputs(&self, indices: &[usize]) -> Result<Tensor> {
        self.check_indices(indices)?;
        let mut data = Vec::with_capacity(indices.len() * self.values_per_item());
        for &i in indices {
            data.extend_from_slice(self.item_inputs(i));
        }
        Tensor::new(self.batch_shape(indices.len()), data)
    }

    /// All items as one tensor.
    pub fn all_inputs(&self) -> Result<Tensor> {
        Tensor::new(self.batch_shape(self.len()), self.inputs.clone())
    }

    pub fn labeled_batch(&self, indices: &[usize]) -> Result<LabeledBatch> {
        let inputs = self.gather_inputs(indices)?;
        let labels = indices
            .iter()
            .flat_map(|&i| self.item_labels(i).iter().copied())
            .collect();
        Ok(LabeledBatch {
            inputs,
            labels,
            indices: indices.to_vec(),
        })
    }

    pub fn unlabeled_batch(&self, indices: &[usize]) -> Result<UnlabeledBatch> {
        Ok(UnlabeledBatch {
            inputs: self.gather_inputs(indices)?,
            indices: indices.to_vec(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub spec: TaskSpec,
    pub labeled: DataSet,
    pub unlabeled: DataSet,
    pub eval: DataSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    /// Positions within the labeled split, for replay.
    pub indices: Vec<usize>,
}

impl LabeledBatch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn empty(shape_of: &DataSet) -> Self {
        Self {
            inputs: Tensor::zeros(shape_of.batch_shape(0)),
            labels: Vec::new(),
            indices: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledBatch {
    pub inputs: Tensor,
    /// Positions within the unlabeled split, for replay.
    pub indices: Vec<usize>,
}

impl UnlabeledBatch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// One training batch: a labeled and an unlabeled half, plus the optional
/// ClassMix selection that pairs labeled item `i` with unlabeled item `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub labeled: LabeledBatch,
    pub unlabeled: UnlabeledBatch,
    pub mix: Option<MixPlan>,
}

/// Draws training batches from a [`TaskData`].
#[derive(Clone, Copy, Debug)]
pub struct BatchSampler<'a> {
    data: &'a TaskData,
    batch_size: usize,
    class_mix: bool,
}

impl<'a> BatchSampler<'a> {
    pub fn new(data: &'a TaskData, batch_size: usize, class_mix: bool) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if batch_size > data.labeled.len() || batch_size > data.unlabeled.len() {
            return Err(Error::InvalidConfig(format!(
                "batch_size {batch_size} exceeds a split ({} labeled, {} unlabeled)",
                data.labeled.len(),
                data.unlabeled.len()
            )));
        }
        if class_mix && !matches!(data.labeled.input, InputShape::Image { .. }) {
            return Err(Error::InvalidConfig("class_mix needs image inputs".into()));
        }
        Ok(Self {
            data,
            batch_size,
            class_mix,
        })
    }

    pub fn class_mix(&self) -> bool {
        self.class_mix
    }

    /// Samples item positions (distinct within the batch) from `data_rng`
    /// and, when mixing is on, the class selection from `aug_rng`.
    pub fn draw<R: Rng, A: Rng>(&self, data_rng: &mut R, aug_rng: &mut A) -> Result<Batch> {
        let li = index::sample(data_rng, self.data.labeled.len(), self.batch_size).into_vec();
        let ui = index::sample(data_rng, self.data.unlabeled.len(), self.batch_size).into_vec();
        let labeled = self.data.labeled.labeled_batch(&li)?;
        let unlabeled = self.data.unlabeled.unlabeled_batch(&ui)?;
        let mix = self.class_mix.then(|| self.mix_plan(&labeled, aug_rng));
        Ok(Batch {
            labeled,
            unlabeled,
            mix,
        })
    }

    /// A fresh ClassMix selection for an existing batch.
    pub fn mix_plan<A: Rng>(&self, labeled: &LabeledBatch, aug_rng: &mut A) -> MixPlan {
        let rows = self.data.labeled.rows_per_item();
        MixPlan {
            selected: labeled
                .labels
                .chunks(rows)
                .map(|item| select_classes(item, aug_rng))
                .collect(),
        }
    }

    /// Rebuilds a batch from its provenance indices.
    pub fn replay(&self, labeled: &[usize], unlabeled: &[usize], mix: Option<MixPlan>) -> Result<Batch> {
        Ok(Batch {
            labeled: self.data.labeled.labeled_batch(labeled)?,
            unlabeled: self.data.unlabeled.unlabeled_batch(unlabeled)?,
            mix,
        })
    }
}

/// Per-item generator: item `id` of a task seeded with `seed` always
/// receives the same random stream.
pub(crate) fn item_rng(seed: u64, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    rng
}
