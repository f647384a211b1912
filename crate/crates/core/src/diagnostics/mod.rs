//! Entropy bookkeeping for trained trees: the ledger over halting nodes,
//! per-router split advantages, a population-level oracle splitter, and the
//! path-feature one-against-all model that a tree induces.

mod oracle;
mod path_oaa;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::example::SparseExample;
use crate::tree::{RecallTree, ROOT};

pub use oracle::{check_boost_bound, BoundCheck, OracleSplitter};
pub use path_oaa::{build_path_oaa, plurality_prediction, PathOaa};

/// Shannon entropy in nats of unnormalized masses.
pub fn entropy_nats<I: IntoIterator<Item = f64>>(masses: I) -> f64 {
    let masses: Vec<f64> = masses.into_iter().filter(|&m| m > 0.0).collect();
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let h = -masses
        .iter()
        .map(|&m| {
            let p = m / total;
            p * p.ln()
        })
        .sum::<f64>();
    h.max(0.0)
}

/// Label distribution of one group of the partition (a halting node, or an
/// oracle leaf).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRecord {
    pub node: u32,
    pub depth: u32,
    pub mass: f64,
    pub fraction: f64,
    pub entropy: f64,
    /// `1 - max_c pi(c)`.
    pub error: f64,
    pub plurality: Option<u32>,
}

/// `W = sum f_n H(pi_n)` and `eps = sum f_n (1 - max pi_n)` over a partition
/// of the data, plus the root entropy `H1`. All entropies are in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyLedger {
    pub groups: Vec<GroupRecord>,
    pub weighted_entropy: f64,
    pub error: f64,
    pub root_entropy: f64,
    pub total_mass: f64,
}

/// One group's sparse class masses.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub node: u32,
    pub depth: u32,
    pub masses: Vec<(u32, f64)>,
}

impl EntropyLedger {
    pub fn from_groups(groups: &[Group]) -> Result<Self> {
        let mut root: BTreeMap<u32, f64> = BTreeMap::new();
        for g in groups {
            for &(c, m) in &g.masses {
                if !(m.is_finite() && m >= 0.0) {
                    return Err(Error::domain(format!("class mass {m} must be non-negative")));
                }
                *root.entry(c).or_default() += m;
            }
        }
        let total: f64 = root.values().sum();
        if total <= 0.0 {
            return Err(Error::domain("ledger needs positive total mass"));
        }
        let mut records = Vec::new();
        let (mut w, mut eps) = (0.0, 0.0);
        for g in groups {
            let mass: f64 = g.masses.iter().map(|m| m.1).sum();
            if mass <= 0.0 {
                continue;
            }
            let mut best: Option<(f64, u32)> = None;
            for &(c, m) in &g.masses {
                if best.is_none_or(|(bm, bc)| m > bm || (m == bm && c < bc)) {
                    best = Some((m, c));
                }
            }
            let rec = GroupRecord {
                node: g.node,
                depth: g.depth,
                mass,
                fraction: mass / total,
                entropy: entropy_nats(g.masses.iter().map(|m| m.1)),
                error: 1.0 - best.map_or(0.0, |b| b.0) / mass,
                plurality: best.map(|b| b.1),
            };
            w += rec.fraction * rec.entropy;
            eps += rec.fraction * rec.error;
            records.push(rec);
        }
        Ok(EntropyLedger {
            groups: records,
            weighted_entropy: w,
            error: eps,
            root_entropy: entropy_nats(root.values().copied()),
            total_mass: total,
        })
    }

    /// Line-oriented dump: a summary line, then one line per group.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "ledger mass={} w_nats={:.6} error={:.6} h1_nats={:.6} groups={}",
            self.total_mass,
            self.weighted_entropy,
            self.error,
            self.root_entropy,
            self.groups.len()
        )
        .unwrap();
        for g in &self.groups {
            let plurality = g.plurality.map_or_else(|| "na".into(), |p| p.to_string());
            writeln!(
                s,
                "node={} depth={} mass={} fraction={:.6} entropy_nats={:.6} error={:.6} plurality={plurality}",
                g.node, g.depth, g.mass, g.fraction, g.entropy, g.error
            )
            .unwrap();
        }
        s
    }

    pub fn summary(&self) -> crate::eval::LedgerSummary {
        crate::eval::LedgerSummary {
            weighted_entropy: self.weighted_entropy,
            error: self.error,
            root_entropy: self.root_entropy,
        }
    }
}

/// Ledger of `examples` partitioned by the node where each halts in `tree`.
pub fn ledger_snapshot(tree: &RecallTree, examples: &[SparseExample]) -> Result<EntropyLedger> {
    let halts: Vec<u32> = examples.par_iter().map(|x| tree.route(x).node).collect();
    let mut counts: BTreeMap<u32, HashMap<u32, f64>> = BTreeMap::new();
    for (x, node) in examples.iter().zip(halts) {
        *counts.entry(node).or_default().entry(x.label).or_default() += 1.0;
    }
    let groups: Vec<Group> = counts
        .into_iter()
        .map(|(node, h)| {
            let mut masses: Vec<_> = h.into_iter().collect();
            masses.sort_unstable_by_key(|m| m.0);
            Group {
                node,
                depth: tree.node(node).depth,
                masses,
            }
        })
        .collect();
    EntropyLedger::from_groups(&groups)
}

/// Empirical quality of one router: the entropy it removes from the labels
/// of the examples that reach its node.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageRecord {
    pub node: u32,
    pub depth: u32,
    /// Share of all examples that reach the node.
    pub fraction: f64,
    /// Share of the node's examples routed left.
    pub left_fraction: f64,
    /// `H(n) - sum_side (m_side / m_n) H(side)` in nats.
    pub advantage: f64,
}

/// Advantage of every router on `examples`, in node-id order. An example
/// that halts at a node still counts toward the side its router picks.
pub fn split_advantages(tree: &RecallTree, examples: &[SparseExample]) -> Vec<AdvantageRecord> {
    type Sides = [HashMap<u32, f64>; 2];
    let visits: Vec<Vec<(u32, usize)>> = examples
        .par_iter()
        .map(|x| {
            let route = tree.route(x);
            let mut feats = x.features.clone();
            let mut out = Vec::new();
            for (i, &node) in route.path.iter().enumerate() {
                if i > 0 && tree.params().path_features {
                    feats.push(tree.path_feature(node));
                }
                let Some((left, _)) = tree.node(node).children else {
                    continue;
                };
                if tree.node(node).is_leaf(tree.params().max_depth) {
                    continue;
                }
                let next = match route.path.get(i + 1) {
                    Some(&c) => c,
                    None => tree.child_for(node, &feats).expect("node has children"),
                };
                out.push((node, (next != left) as usize));
            }
            out
        })
        .collect();
    let mut per_node: BTreeMap<u32, Sides> = BTreeMap::new();
    for (x, v) in examples.iter().zip(visits) {
        for (node, side) in v {
            *per_node.entry(node).or_default()[side]
                .entry(x.label)
                .or_default() += 1.0;
        }
    }
    let n = examples.len() as f64;
    per_node
        .into_iter()
        .map(|(node, sides)| {
            let m: [f64; 2] = [sides[0].values().sum(), sides[1].values().sum()];
            let total = m[0] + m[1];
            let mut all: HashMap<u32, f64> = sides[0].clone();
            for (&c, &v) in &sides[1] {
                *all.entry(c).or_default() += v;
            }
            let h_n = entropy_nats(all.values().copied());
            let h_children: f64 = (0..2)
                .map(|s| m[s] / total * entropy_nats(sides[s].values().copied()))
                .sum();
            AdvantageRecord {
                node,
                depth: tree.node(node).depth,
                fraction: total / n,
                left_fraction: m[0] / total,
                advantage: h_n - h_children,
            }
        })
        .collect()
}

/// Smallest advantage among routers reached by at least `min_fraction` of
/// the data.
pub fn min_advantage(records: &[AdvantageRecord], min_fraction: f64) -> Option<f64> {
    records
        .iter()
        .filter(|r| r.fraction >= min_fraction)
        .map(|r| r.advantage)
        .min_by(f64::total_cmp)
}

/// Nodes on the root-to-halt path of `x`.
pub fn path_of(tree: &RecallTree, x: &SparseExample) -> Vec<u32> {
    let path = tree.route(x).path;
    debug_assert_eq!(path.first(), Some(&ROOT));
    path
}
