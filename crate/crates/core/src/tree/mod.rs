//! The recall tree: a dynamically grown binary tree of routers that narrows
//! the K classes down to a small candidate set, followed by one-against-some
//! scoring of those candidates.
//!
//! Every node keeps a label histogram whose top `F` classes are its
//! candidates. Descent stops at a node once its child's Bernstein lower bound
//! on recall drops below its own, so shallow nodes with plenty of data win
//! over deep, sparsely observed ones.

mod bound;
mod node;
mod params;

use crate::error::{Error, Result};
use crate::example::SparseExample;
use crate::linear::{BinaryLabel, ScorerKey, WeightStore};

pub use bound::recall_lower_bound;
pub use node::TreeNode;
pub use params::{
    ceil_log2, default_max_depth, default_num_candidates, Hyperparams, RouterScale, RouterSign,
};

pub const ROOT: u32 = 0;

/// Router updates with smaller importance are skipped.
const MIN_ROUTER_IMPORTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Halt,
    Continue(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub class: u32,
    /// Node where descent halted.
    pub node: u32,
    pub scored_classes: u32,
    pub router_evals: u32,
}

/// Where an example ends up, and the features it carries there.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub node: u32,
    /// Every node traversed, root first, halting node last.
    pub path: Vec<u32>,
    pub features: Vec<(u64, f32)>,
    pub router_evals: u32,
}

/// Outcome of one router update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouterUpdate {
    /// `H|left - H|right` in bits.
    pub delta: f64,
    pub label: BinaryLabel,
    pub importance: f64,
}

#[derive(Debug, Clone)]
pub struct RecallTree {
    pub(crate) num_classes: u32,
    pub(crate) num_raw_features: u64,
    pub(crate) params: Hyperparams,
    pub(crate) nodes: Vec<TreeNode>,
    pub(crate) routers: WeightStore,
    pub(crate) scorers: WeightStore,
}

impl RecallTree {
    /// An untrained tree over `num_classes` classes. Data features must lie
    /// in `[0, num_raw_features)`; path features are placed right after.
    pub fn new(num_classes: u32, num_raw_features: u64, params: Hyperparams) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::domain("num_classes must be positive"));
        }
        if num_raw_features == 0 {
            return Err(Error::domain("num_raw_features must be positive"));
        }
        params.validate()?;
        let store = |p: &Hyperparams| {
            if p.adagrad {
                WeightStore::with_adagrad(p.bits, p.learning_rate)
            } else {
                WeightStore::new(p.bits, p.learning_rate)
            }
        };
        let mut tree = RecallTree {
            num_classes,
            num_raw_features,
            routers: store(&params)?,
            scorers: store(&params)?,
            params,
            nodes: Vec::new(),
        };
        tree.nodes.push(tree.fresh_node(ROOT, 0, None));
        Ok(tree)
    }

    fn fresh_node(&self, id: u32, depth: u32, parent: Option<u32>) -> TreeNode {
        let full = self.params.num_candidates >= self.num_classes;
        TreeNode::new(id, depth, parent, full.then_some(self.num_classes))
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn num_raw_features(&self) -> u64 {
        self.num_raw_features
    }

    pub fn params(&self) -> &Hyperparams {
        &self.params
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: u32) -> &TreeNode {
        &self.nodes[id as usize]
    }

    pub fn router_store(&self) -> &WeightStore {
        &self.routers
    }

    pub fn class_store(&self) -> &WeightStore {
        &self.scorers
    }

    pub fn class_store_mut(&mut self) -> &mut WeightStore {
        &mut self.scorers
    }

    pub fn examples_seen(&self) -> u64 {
        self.nodes[ROOT as usize].total()
    }

    /// Indicator feature recording a visit to `node`, disjoint from every
    /// data feature.
    pub fn path_feature(&self, node: u32) -> (u64, f32) {
        (self.num_raw_features + node as u64, 1.0)
    }

    pub fn recall_bound(&self, node: u32) -> f64 {
        let n = self.node(node);
        recall_lower_bound(
            n.recall_hat(),
            n.total(),
            self.params.depth_penalty as f64,
            self.params.bernstein_multiplier as f64,
        )
    }

    pub(crate) fn child_for(&self, node: u32, features: &[(u64, f32)]) -> Option<u32> {
        let (left, right) = self.node(node).children?;
        let m = self.routers.margin(ScorerKey::router(node), features);
        Some(if m > 0.0 { left } else { right })
    }

    /// One descent decision at `node`. On `Continue` the child's path feature
    /// has been appended to `features` (when path features are enabled).
    pub fn descend_step(&self, node: u32, features: &mut Vec<(u64, f32)>) -> Step {
        if self.node(node).is_leaf(self.params.max_depth) {
            return Step::Halt;
        }
        let Some(child) = self.child_for(node, features) else {
            return Step::Halt;
        };
        if self.recall_bound(node) > self.recall_bound(child) {
            return Step::Halt;
        }
        if self.params.path_features {
            features.push(self.path_feature(child));
        }
        Step::Continue(child)
    }

    /// Routes `x` without learning.
    pub fn route(&self, x: &SparseExample) -> Route {
        let mut features = x.features.clone();
        let mut node = ROOT;
        let mut path = vec![ROOT];
        let mut router_evals = 0;
        loop {
            let internal = !self.node(node).is_leaf(self.params.max_depth);
            let step = self.descend_step(node, &mut features);
            router_evals += internal as u32;
            match step {
                Step::Halt => break,
                Step::Continue(child) => {
                    node = child;
                    path.push(child);
                }
            }
        }
        Route {
            node,
            path,
            features,
            router_evals,
        }
    }

    pub fn predict(&self, x: &SparseExample) -> Result<Prediction> {
        if self.examples_seen() == 0 {
            return Err(Error::NotTrained);
        }
        let route = self.route(x);
        let candidates = self.node(route.node).candidates();
        let mut best: Option<(f64, u32)> = None;
        for &c in candidates {
            let m = self.scorers.margin(ScorerKey::class(c), &route.features);
            let better = match best {
                None => true,
                Some((bm, bc)) => m > bm || (m == bm && c < bc),
            };
            if better {
                best = Some((m, c));
            }
        }
        Ok(Prediction {
            class: best.map_or(0, |(_, c)| c),
            node: route.node,
            scored_classes: candidates.len() as u32,
            router_evals: route.router_evals,
        })
    }

    fn check_example(&self, x: &SparseExample) -> Result<()> {
        if x.label >= self.num_classes {
            return Err(Error::domain(format!(
                "label {} outside [0, {})",
                x.label, self.num_classes
            )));
        }
        if !(x.importance.is_finite() && x.importance > 0.0) {
            return Err(Error::domain(format!("importance {} must be positive", x.importance)));
        }
        if let Some(i) = x.max_index() {
            if i >= self.num_raw_features {
                return Err(Error::domain(format!(
                    "feature index {i} outside raw feature space of {}",
                    self.num_raw_features
                )));
            }
        }
        Ok(())
    }

    fn ensure_children(&mut self, node: u32) {
        let n = &self.nodes[node as usize];
        if n.children.is_some() || n.depth >= self.params.max_depth {
            return;
        }
        let depth = n.depth + 1;
        let left = self.nodes.len() as u32;
        let right = left + 1;
        let l = self.fresh_node(left, depth, Some(node));
        let r = self.fresh_node(right, depth, Some(node));
        self.nodes.push(l);
        self.nodes.push(r);
        self.nodes[node as usize].children = Some((left, right));
    }

    /// One online training step on `x`.
    pub fn train_example(&mut self, x: &SparseExample) -> Result<()> {
        self.check_example(x)?;
        let y = x.label;
        let importance = x.importance as f64;
        let budget = self.params.num_candidates;
        let mut features = x.features.clone();
        let mut node = ROOT;
        self.nodes[ROOT as usize].observe(y, budget);
        loop {
            if self.node(node).depth >= self.params.max_depth {
                break;
            }
            self.ensure_children(node);
            self.update_router(node, &features, y, importance)?;
            let child = self
                .child_for(node, &features)
                .expect("children were just materialized");
            self.nodes[child as usize].observe(y, budget);
            if self.recall_bound(node) > self.recall_bound(child) {
                break;
            }
            node = child;
            if self.params.path_features {
                features.push(self.path_feature(child));
            }
        }
        self.update_predictors(&features, y, node, importance)
    }

    /// Trains the router at `node` toward the child whose weighted label
    /// entropy grows least when `y` joins it. Returns `None` when the
    /// entropy difference is zero or the node has no mass yet.
    pub fn update_router(
        &mut self,
        node: u32,
        features: &[(u64, f32)],
        y: u32,
        importance: f64,
    ) -> Result<Option<RouterUpdate>> {
        let n = self.node(node);
        let Some((left, right)) = n.children else {
            return Ok(None);
        };
        let m_n = n.total();
        if m_n == 0 {
            return Ok(None);
        }
        let (l, r) = (self.node(left), self.node(right));
        let w_l = l.total() as f64 / m_n as f64;
        let w_r = r.total() as f64 / m_n as f64;
        let h_if_left = w_l * l.entropy_bits(Some(y)) + w_r * r.entropy_bits(None);
        let h_if_right = w_l * l.entropy_bits(None) + w_r * r.entropy_bits(Some(y));
        let delta = h_if_left - h_if_right;
        if delta.abs() < MIN_ROUTER_IMPORTANCE {
            return Ok(None);
        }
        let label = match self.params.router_sign {
            RouterSign::Corrected => BinaryLabel::from_sign(-delta),
            RouterSign::Literal => BinaryLabel::from_sign(delta),
        };
        let update = RouterUpdate {
            delta,
            label,
            importance: importance
                * match self.params.router_scale {
                    RouterScale::Mass => delta.abs() * m_n as f64,
                    RouterScale::Fraction => delta.abs(),
                },
        };
        self.routers
            .learn(ScorerKey::router(node), features, update.importance, label)?;
        Ok(Some(update))
    }

    /// One-against-some update over the candidates of `node`: positive for
    /// `y`, negative for the rest. Nothing happens when `y` is not a
    /// candidate. Scorers are updated in class-id order.
    pub fn update_predictors(
        &mut self,
        features: &[(u64, f32)],
        y: u32,
        node: u32,
        importance: f64,
    ) -> Result<()> {
        let candidates = self.nodes[node as usize].candidates();
        if !candidates.contains(&y) {
            return Ok(());
        }
        let mut classes = candidates.to_vec();
        classes.sort_unstable();
        for c in classes {
            let label = if c == y {
                BinaryLabel::Positive
            } else {
                BinaryLabel::Negative
            };
            self.scorers
                .learn(ScorerKey::class(c), features, importance, label)?;
        }
        Ok(())
    }
}
