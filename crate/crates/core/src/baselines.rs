//! One-against-all over the same hashed logistic learner the tree uses.

use crate::error::{Error, Result};
use crate::example::SparseExample;
use crate::linear::{BinaryLabel, ScorerKey, WeightStore};

#[derive(Debug, Clone, PartialEq)]
pub struct OaaModel {
    pub(crate) num_classes: u32,
    pub(crate) scorers: WeightStore,
    pub(crate) examples_seen: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OaaPrediction {
    pub class: u32,
    /// Always `K`.
    pub scored_classes: u32,
}

impl OaaModel {
    pub fn new(num_classes: u32, bits: u32, learning_rate: f32) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::domain("num_classes must be positive"));
        }
        Ok(OaaModel {
            num_classes,
            scorers: WeightStore::new(bits, learning_rate)?,
            examples_seen: 0,
        })
    }

    pub fn with_adagrad(num_classes: u32, bits: u32, learning_rate: f32) -> Result<Self> {
        let mut m = Self::new(num_classes, bits, learning_rate)?;
        m.scorers = WeightStore::with_adagrad(bits, learning_rate)?;
        Ok(m)
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn examples_seen(&self) -> u64 {
        self.examples_seen
    }

    pub fn class_store(&self) -> &WeightStore {
        &self.scorers
    }

    pub fn class_store_mut(&mut self) -> &mut WeightStore {
        &mut self.scorers
    }

    pub fn train_example(&mut self, x: &SparseExample) -> Result<()> {
        if x.label >= self.num_classes {
            return Err(Error::domain(format!(
                "label {} outside [0, {})",
                x.label, self.num_classes
            )));
        }
        let importance = x.importance as f64;
        for c in 0..self.num_classes {
            let label = if c == x.label {
                BinaryLabel::Positive
            } else {
                BinaryLabel::Negative
            };
            self.scorers
                .learn(ScorerKey::class(c), &x.features, importance, label)?;
        }
        self.examples_seen += 1;
        Ok(())
    }

    /// Argmax over every class margin, ties to the smaller id. Works on a
    /// fresh model, where it returns class 0.
    pub fn best_class(&self, features: &[(u64, f32)]) -> u32 {
        let mut best = (f64::NEG_INFINITY, 0);
        for c in 0..self.num_classes {
            let m = self.scorers.margin(ScorerKey::class(c), features);
            if m > best.0 {
                best = (m, c);
            }
        }
        best.1
    }

    pub fn predict(&self, x: &SparseExample) -> Result<OaaPrediction> {
        if self.examples_seen == 0 {
            return Err(Error::NotTrained);
        }
        Ok(OaaPrediction {
            class: self.best_class(&x.features),
            scored_classes: self.num_classes,
        })
    }
}
