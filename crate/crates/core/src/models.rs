//! The two student/teacher architectures: an MLP classifier and a small
//! fully-convolutional per-pixel segmenter.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{softmax_rows, Graph, NodeId};
use crate::params::{Layout, ParamVector};
use crate::tensor::Tensor;

/// Spatial size of every convolution kernel in the segmenter.
pub const KERNEL: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Mlp,
    ConvSeg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputShape {
    Features(usize),
    Image {
        height: usize,
        width: usize,
        channels: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input: InputShape,
    /// Hidden layer widths; the output layer (width `num_classes`) is implicit.
    pub hidden: Vec<usize>,
    pub num_classes: usize,
}

impl ModelSpec {
    /// 2-16-16-2 MLP for two-moons.
    pub fn two_moons_mlp() -> Self {
        Self {
            kind: ModelKind::Mlp,
            input: InputShape::Features(2),
            hidden: vec![16, 16],
            num_classes: 2,
        }
    }

    /// Three 3x3 conv layers with widths 8-8-C.
    pub fn conv_seg(height: usize, width: usize, channels: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::ConvSeg,
            input: InputShape::Image {
                height,
                width,
                channels,
            },
            hidden: vec![8, 8],
            num_classes,
        }
    }

    fn in_width(&self) -> usize {
        match self.input {
            InputShape::Features(d) => d,
            InputShape::Image { channels, .. } => channels,
        }
    }

    /// `(fan_in, fan_out)` of every layer, in declaration order.
    pub fn layer_fans(&self) -> Vec<(usize, usize)> {
        let taps = match self.kind {
            ModelKind::Mlp => 1,
            ModelKind::ConvSeg => KERNEL * KERNEL,
        };
        let mut widths = vec![self.in_width()];
        widths.extend(&self.hidden);
        widths.push(self.num_classes);
        widths.windows(2).map(|w| (taps * w[0], w[1])).collect()
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.input) {
            (ModelKind::Mlp, InputShape::Features(_)) | (ModelKind::ConvSeg, InputShape::Image { .. }) => {}
            _ => {
                return Err(Error::InvalidModel(format!(
                    "{:?} model cannot take {:?} input",
                    self.kind, self.input
                )))
            }
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidModel("need at least two classes".into()));
        }
        if self.in_width() == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidModel("zero-width layer".into()));
        }
        if let InputShape::Image { height, width, .. } = self.input {
            if height == 0 || width == 0 {
                return Err(Error::InvalidModel("empty image".into()));
            }
        }
        Ok(())
    }
}

/// Immutable architecture; weights live in a separate [`ParamVector`].
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    layout: Arc<Layout>,
}

/// Builds the model and draws Glorot-uniform weights (zero biases) from `seed`.
pub fn build(spec: &ModelSpec, seed: u64) -> Result<(Model, ParamVector)> {
    spec.validate()?;
    let mut layout = Layout::new();
    let fans = spec.layer_fans();
    let mut widths = vec![spec.in_width()];
    widths.extend(&spec.hidden);
    widths.push(spec.num_classes);
    for (i, pair) in widths.windows(2).enumerate() {
        let (cin, cout) = (pair[0], pair[1]);
        let shape = match spec.kind {
            ModelKind::Mlp => vec![cin, cout],
            ModelKind::ConvSeg => vec![KERNEL, KERNEL, cin, cout],
        };
        layout.push(format!("layer{i}.weight"), shape);
        layout.push(format!("layer{i}.bias"), vec![cout]);
    }
    let layout = Arc::new(layout);
    let mut params = ParamVector::zeros(layout.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (i, &(fan_in, fan_out)) in fans.iter().enumerate() {
        let bound = init_bound(fan_in, fan_out);
        for w in params.slot_values_mut(2 * i) {
            *w = rng.random_range(-bound..=bound);
        }
    }
    Ok((
        Model {
            spec: spec.clone(),
            layout,
        },
        params,
    ))
}

/// Glorot-uniform half-width `sqrt(6 / (fan_in + fan_out))`.
pub fn init_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn num_layers(&self) -> usize {
        self.spec.hidden.len() + 1
    }

    /// Prediction rows per input item: `H * W` for images, 1 for feature vectors.
    pub fn rows_per_item(&self) -> usize {
        match self.spec.input {
            InputShape::Features(_) => 1,
            InputShape::Image { height, width, .. } => height * width,
        }
    }

    /// Checks the input tensor and returns its batch size.
    pub fn check_input(&self, input: &Tensor) -> Result<usize> {
        let shape = input.shape();
        let ok = match self.spec.input {
            InputShape::Features(d) => shape.len() == 2 && shape[1] == d,
            InputShape::Image {
                height,
                width,
                channels,
            } => shape.len() == 4 && shape[1..] == [height, width, channels],
        };
        if !ok {
            return Err(Error::ShapeMismatch {
                node: "node 0 (input)".into(),
                detail: format!("model expects {:?}, got {shape:?}", self.spec.input),
            });
        }
        Ok(shape[0])
    }

    /// Records the forward pass on `graph` and returns the logits node.
    pub fn logits(&self, graph: &mut Graph<'_>, input: Tensor) -> Result<NodeId> {
        self.check_input(&input)?;
        let mut h = graph.input(input);
        let layers = self.num_layers();
        for i in 0..layers {
            let w = graph.param(2 * i)?;
            let b = graph.param(2 * i + 1)?;
            h = match self.spec.kind {
                ModelKind::Mlp => graph.matmul(h, w)?,
                ModelKind::ConvSeg => graph.conv2d(h, w)?,
            };
            h = graph.add_bias(h, b)?;
            if i + 1 < layers {
                h = graph.relu(h)?;
            }
        }
        Ok(h)
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.layout().as_ref() == self.layout.as_ref() {
            Ok(())
        } else {
            Err(Error::LayoutMismatch)
        }
    }

    pub fn forward(&self, params: &ParamVector, input: &Tensor) -> Result<Tensor> {
        self.check_params(params)?;
        let mut graph = Graph::new(params);
        let out = self.logits(&mut graph, input.clone())?;
        Ok(graph.value(out).clone())
    }

    /// Class probabilities, `[B, C]` or `[B, H, W, C]`.
    pub fn predict(&self, params: &ParamVector, input: &Tensor) -> Result<Tensor> {
        let logits = self.forward(params, input)?;
        let probs = softmax_rows(logits.data(), logits.last_dim());
        Tensor::new(logits.shape().to_vec(), probs)
    }

    /// Masked mean cross-entropy and its gradient with respect to `params`.
    pub fn loss_and_grad(
        &self,
        params: &ParamVector,
        input: &Tensor,
        labels: &[usize],
        mask: &[bool],
    ) -> Result<(f64, ParamVector)> {
        self.check_params(params)?;
        let mut graph = Graph::new(params);
        let logits = self.logits(&mut graph, input.clone())?;
        let loss = graph.softmax_cross_entropy(logits, labels, mask)?;
        let value = graph.value(loss).data()[0];
        Ok((value, graph.backward(loss)?))
    }
}
