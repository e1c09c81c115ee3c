//! Flat parameter vectors.
//!
//! Every model parameter lives in one contiguous `Vec<f64>`; a [`Layout`]
//! records where each named tensor starts. Student weights, teacher weights,
//! gradients and virtual (look-ahead) weights all share the same layout, so
//! EMA and gradient-descent arithmetic is plain elementwise work.

use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSlot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered, contiguous description of the parameters of a model.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Layout {
    slots: Vec<ParamSlot>,
    len: usize,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a slot directly after the previous one.
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>) -> usize {
        let slot = ParamSlot {
            name: name.into(),
            shape,
            offset: self.len,
        };
        self.len += slot.len();
        self.slots.push(slot);
        self.slots.len() - 1
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    pub fn slot(&self, index: usize) -> Option<&ParamSlot> {
        self.slots.get(index)
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Model parameters (or a gradient) flattened in declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        let values = vec![0.0; layout.len()];
        Self { layout, values }
    }

    pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::LayoutMismatch);
        }
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slot_values(&self, index: usize) -> &[f64] {
        &self.values[self.layout.slots[index].range()]
    }

    pub fn slot_values_mut(&mut self, index: usize) -> &mut [f64] {
        let range = self.layout.slots[index].range();
        &mut self.values[range]
    }

    pub fn get(&self, name: &str) -> Result<&[f64]> {
        let idx = self
            .layout
            .find(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        Ok(self.slot_values(idx))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let idx = self
            .layout
            .find(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        Ok(self.slot_values_mut(idx))
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }

    pub fn check_layout(&self, other: &ParamVector) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::LayoutMismatch)
        }
    }

    /// Deep copy used to cache a state before exploring from it.
    pub fn snapshot(&self) -> ParamVector {
        self.clone()
    }

    /// Overwrites `self` with a previously taken snapshot.
    pub fn restore(&mut self, snapshot: &ParamVector) -> Result<()> {
        self.check_layout(snapshot)?;
        self.values.copy_from_slice(&snapshot.values);
        Ok(())
    }

    /// `momentum * self + (1 - momentum) * other`, elementwise.
    pub fn ema(&self, other: &ParamVector, momentum: f64) -> Result<ParamVector> {
        self.check_layout(other)?;
        let keep = 1.0 - momentum;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| momentum * a + keep * b)
            .collect();
        Ok(ParamVector {
            layout: self.layout.clone(),
            values,
        })
    }

    /// One plain gradient-descent step: `self - lr * grad`.
    pub fn descend(&self, grad: &ParamVector, lr: f64) -> Result<ParamVector> {
        self.check_layout(grad)?;
        let values = self
            .values
            .iter()
            .zip(&grad.values)
            .map(|(&w, &g)| w - lr * g)
            .collect();
        Ok(ParamVector {
            layout: self.layout.clone(),
            values,
        })
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &ParamVector) -> Result<ParamVector> {
        self.check_layout(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a + alpha * b)
            .collect();
        Ok(ParamVector {
            layout: self.layout.clone(),
            values,
        })
    }

    pub fn scaled(&self, factor: f64) -> ParamVector {
        ParamVector {
            layout: self.layout.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Accumulates `other` into `self` in index order.
    pub fn add_assign(&mut self, other: &ParamVector) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &ParamVector) -> Result<f64> {
        self.check_layout(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Equality of the underlying bit patterns (distinguishes `0.0` from `-0.0`).
    pub fn bitwise_eq(&self, other: &ParamVector) -> bool {
        self.same_layout(other)
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}
