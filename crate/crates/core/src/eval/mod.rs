//! Progressive and holdout evaluation, work counters, reports, synthetic
//! data and model files.

pub mod persist;
pub mod stats;
pub mod synth;

use std::borrow::Borrow;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::baselines::OaaModel;
use crate::error::{Error, Result};
use crate::example::SparseExample;
use crate::tree::RecallTree;
use persist::Model;

/// A prediction plus the work it took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scored {
    pub class: u32,
    pub scored_classes: u32,
    pub router_evals: u32,
}

pub trait OnlineLearner {
    fn predict(&self, x: &SparseExample) -> Result<Scored>;
    fn learn(&mut self, x: &SparseExample) -> Result<()>;
}

impl OnlineLearner for RecallTree {
    fn predict(&self, x: &SparseExample) -> Result<Scored> {
        let p = RecallTree::predict(self, x)?;
        Ok(Scored {
            class: p.class,
            scored_classes: p.scored_classes,
            router_evals: p.router_evals,
        })
    }

    fn learn(&mut self, x: &SparseExample) -> Result<()> {
        self.train_example(x)
    }
}

impl OnlineLearner for OaaModel {
    fn predict(&self, x: &SparseExample) -> Result<Scored> {
        let p = OaaModel::predict(self, x)?;
        Ok(Scored {
            class: p.class,
            scored_classes: p.scored_classes,
            router_evals: 0,
        })
    }

    fn learn(&mut self, x: &SparseExample) -> Result<()> {
        self.train_example(x)
    }
}

impl OnlineLearner for Model {
    fn predict(&self, x: &SparseExample) -> Result<Scored> {
        match self {
            Model::RecallTree(t) => OnlineLearner::predict(t, x),
            Model::Oaa(m) => OnlineLearner::predict(m, x),
        }
    }

    fn learn(&mut self, x: &SparseExample) -> Result<()> {
        match self {
            Model::RecallTree(t) => t.train_example(x),
            Model::Oaa(m) => m.train_example(x),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
}

impl Accuracy {
    pub fn record(&mut self, hit: bool) {
        self.correct += hit as u64;
        self.total += 1;
    }

    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    pub fn error(&self) -> f64 {
        1.0 - self.value()
    }
}

/// Running totals of predictions and the work they cost.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tally {
    pub accuracy: Accuracy,
    pub scored_classes: u64,
    pub router_evals: u64,
    pub max_scored_classes: u32,
    pub max_router_evals: u32,
}

impl Tally {
    fn record(&mut self, label: u32, p: Option<Scored>) {
        self.accuracy.record(p.is_some_and(|p| p.class == label));
        if let Some(p) = p {
            self.scored_classes += p.scored_classes as u64;
            self.router_evals += p.router_evals as u64;
            self.max_scored_classes = self.max_scored_classes.max(p.scored_classes);
            self.max_router_evals = self.max_router_evals.max(p.router_evals);
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.accuracy.correct += other.accuracy.correct;
        self.accuracy.total += other.accuracy.total;
        self.scored_classes += other.scored_classes;
        self.router_evals += other.router_evals;
        self.max_scored_classes = self.max_scored_classes.max(other.max_scored_classes);
        self.max_router_evals = self.max_router_evals.max(other.max_router_evals);
        self
    }

    pub fn scored_classes_mean(&self) -> f64 {
        mean(self.scored_classes, self.accuracy.total)
    }

    pub fn router_evals_mean(&self) -> f64 {
        mean(self.router_evals, self.accuracy.total)
    }

    /// Predict `x`, score it, then train on it. A learner that has not seen
    /// anything yet counts as a miss.
    pub fn progressive_step<L: OnlineLearner + ?Sized>(
        &mut self,
        learner: &mut L,
        x: &SparseExample,
    ) -> Result<()> {
        let p = match learner.predict(x) {
            Ok(p) => Some(p),
            Err(Error::NotTrained) => None,
            Err(e) => return Err(e),
        };
        self.record(x.label, p);
        learner.learn(x)
    }
}

fn mean(sum: u64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

/// Online evaluation: every example is predicted before it is trained on.
pub fn progressive_eval<L, I>(learner: &mut L, examples: I) -> Result<Tally>
where
    L: OnlineLearner + ?Sized,
    I: IntoIterator,
    I::Item: Borrow<SparseExample>,
{
    let mut tally = Tally::default();
    for x in examples {
        tally.progressive_step(learner, x.borrow())?;
    }
    Ok(tally)
}

/// Evaluates a frozen model, in parallel over examples.
pub fn holdout_eval<L>(model: &L, examples: &[SparseExample]) -> Result<Tally>
where
    L: OnlineLearner + Sync + ?Sized,
{
    examples
        .par_iter()
        .map(|x| {
            let mut t = Tally::default();
            t.record(x.label, Some(model.predict(x)?));
            Ok(t)
        })
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))
}

/// Predictions of a frozen model in input order.
pub fn predict_all<L>(model: &L, examples: &[SparseExample]) -> Result<Vec<u32>>
where
    L: OnlineLearner + Sync + ?Sized,
{
    examples
        .par_iter()
        .map(|x| model.predict(x).map(|p| p.class))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerSummary {
    pub weighted_entropy: f64,
    pub error: f64,
    pub root_entropy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub algo: String,
    pub progressive: Option<Tally>,
    pub holdout: Option<Tally>,
    pub examples_seen: u64,
    pub ledger: Option<LedgerSummary>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "na".to_owned(), |v| format!("{v:.6}"))
}

impl EvalReport {
    pub fn progressive_accuracy(&self) -> Option<f64> {
        self.progressive.map(|t| t.accuracy.value())
    }

    pub fn holdout_accuracy(&self) -> Option<f64> {
        self.holdout.map(|t| t.accuracy.value())
    }

    /// Work counters come from the holdout pass when there is one.
    fn work(&self) -> Option<&Tally> {
        self.holdout.as_ref().or(self.progressive.as_ref())
    }

    pub fn scored_classes_mean(&self) -> Option<f64> {
        self.work().map(Tally::scored_classes_mean)
    }

    pub fn router_evals_mean(&self) -> Option<f64> {
        self.work().map(Tally::router_evals_mean)
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        let ledger = self.ledger;
        vec![
            ("algo", self.algo.clone()),
            ("examples_seen", self.examples_seen.to_string()),
            ("progressive_accuracy", fmt_opt(self.progressive_accuracy())),
            ("holdout_accuracy", fmt_opt(self.holdout_accuracy())),
            ("scored_classes_mean", fmt_opt(self.scored_classes_mean())),
            ("router_evals_mean", fmt_opt(self.router_evals_mean())),
            ("ledger_w_nats", fmt_opt(ledger.map(|l| l.weighted_entropy))),
            ("ledger_error", fmt_opt(ledger.map(|l| l.error))),
            ("ledger_h1_nats", fmt_opt(ledger.map(|l| l.root_entropy))),
        ]
    }

    /// One `key=value` pair per line.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.fields() {
            writeln!(s, "{k}={v}").unwrap();
        }
        s
    }

    pub fn tsv_header(&self) -> String {
        self.fields()
            .iter()
            .map(|(k, _)| *k)
            .collect::<Vec<_>>()
            .join("\t")
    }

    pub fn tsv_row(&self) -> String {
        self.fields()
            .into_iter()
            .map(|(_, v)| v)
            .collect::<Vec<_>>()
            .join("\t")
    }
}
