use super::{entropy_nats, EntropyLedger, Group};
use crate::error::{Error, Result};

/// Splits `[0, 1]` bisection steps; 200 halvings is far below f64 resolution.
const BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone)]
struct Leaf {
    id: u32,
    depth: u32,
    masses: Vec<f64>,
}

impl Leaf {
    fn mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// A weak learner that works on class-mass vectors rather than samples. Each
/// split achieves exactly the requested advantage `gamma` (in nats), which
/// makes it a worst case for the boosting argument.
#[derive(Debug, Clone)]
pub struct OracleSplitter {
    gamma: f64,
    leaves: Vec<Leaf>,
    next_id: u32,
}

/// Advantage in nats of sending `q` of group A's mass and `1 - q` of group
/// B's mass left.
fn advantage(masses: &[f64], in_a: &[bool], q: f64) -> f64 {
    let (left, right) = split_masses(masses, in_a, q);
    let (ml, mr): (f64, f64) = (left.iter().sum(), right.iter().sum());
    let m = ml + mr;
    entropy_nats(masses.iter().copied())
        - ml / m * entropy_nats(left)
        - mr / m * entropy_nats(right)
}

fn split_masses(masses: &[f64], in_a: &[bool], q: f64) -> (Vec<f64>, Vec<f64>) {
    masses
        .iter()
        .zip(in_a)
        .map(|(&m, &a)| {
            let to_left = if a { q } else { 1.0 - q };
            (m * to_left, m * (1.0 - to_left))
        })
        .unzip()
}

impl OracleSplitter {
    pub fn new(class_masses: Vec<f64>, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::domain("gamma must be positive"));
        }
        if class_masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::domain("class masses must be non-negative"));
        }
        if class_masses.iter().sum::<f64>() <= 0.0 {
            return Err(Error::domain("class masses must not all be zero"));
        }
        Ok(OracleSplitter {
            gamma,
            leaves: vec![Leaf {
                id: 0,
                depth: 0,
                masses: class_masses,
            }],
            next_id: 1,
        })
    }

    /// Uses the empirical label distribution of `labels` over `num_classes`.
    pub fn from_labels(labels: impl IntoIterator<Item = u32>, num_classes: u32, gamma: f64) -> Result<Self> {
        let mut masses = vec![0.0; num_classes as usize];
        for y in labels {
            *masses
                .get_mut(y as usize)
                .ok_or_else(|| Error::domain(format!("label {y} outside [0, {num_classes})")))? += 1.0;
        }
        Self::new(masses, gamma)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn ledger(&self) -> EntropyLedger {
        let groups: Vec<Group> = self
            .leaves
            .iter()
            .map(|l| Group {
                node: l.id,
                depth: l.depth,
                masses: l
                    .masses
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m > 0.0)
                    .map(|(c, &m)| (c as u32, m))
                    .collect(),
            })
            .collect();
        EntropyLedger::from_groups(&groups).expect("mass is conserved by splits")
    }

    /// Splits the heaviest leaf (ties to the smaller id) with advantage
    /// exactly `gamma`. Returns the id of the split leaf, or an error when no
    /// leaf admits a `gamma`-advantage split.
    pub fn split(&mut self) -> Result<u32> {
        let mut order: Vec<usize> = (0..self.leaves.len()).collect();
        order.sort_by(|&a, &b| {
            let (la, lb) = (&self.leaves[a], &self.leaves[b]);
            lb.mass().total_cmp(&la.mass()).then(la.id.cmp(&lb.id))
        });
        for i in order {
            if let Some((left, right)) = self.try_split(&self.leaves[i]) {
                let parent = self.leaves.swap_remove(i);
                for masses in [left, right] {
                    self.leaves.push(Leaf {
                        id: self.next_id,
                        depth: parent.depth + 1,
                        masses,
                    });
                    self.next_id += 1;
                }
                return Ok(parent.id);
            }
        }
        Err(Error::domain(format!(
            "no leaf admits a split with advantage {}",
            self.gamma
        )))
    }

    fn try_split(&self, leaf: &Leaf) -> Option<(Vec<f64>, Vec<f64>)> {
        let masses = &leaf.masses;
        // greedy balanced partition of the classes by mass
        let mut classes: Vec<usize> = (0..masses.len()).filter(|&c| masses[c] > 0.0).collect();
        if classes.len() < 2 {
            return None;
        }
        classes.sort_by(|&a, &b| masses[b].total_cmp(&masses[a]).then(a.cmp(&b)));
        let mut in_a = vec![false; masses.len()];
        let (mut ma, mut mb) = (0.0, 0.0);
        for c in classes {
            if ma <= mb {
                in_a[c] = true;
                ma += masses[c];
            } else {
                mb += masses[c];
            }
        }
        if advantage(masses, &in_a, 1.0) < self.gamma {
            return None;
        }
        // the advantage grows monotonically from 0 at q = 1/2 to its maximum at q = 1
        let (mut lo, mut hi) = (0.5, 1.0);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if advantage(masses, &in_a, mid) < self.gamma {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(split_masses(masses, &in_a, hi))
    }

    /// Ledgers after 0, 1, ..., `splits` splits. Stops early if no further
    /// split is possible.
    pub fn run(mut self, splits: usize) -> Vec<EntropyLedger> {
        let mut history = vec![self.ledger()];
        for _ in 0..splits {
            if self.split().is_err() {
                break;
            }
            history.push(self.ledger());
        }
        history
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub splits: usize,
    pub error: f64,
    pub weighted_entropy: f64,
    /// `H1 - gamma (1 + ln t)`.
    pub bound: f64,
    /// `H1 - gamma (1 + 1/2 + ... + 1/t)`, the telescoped entropy bound.
    pub harmonic_bound: f64,
    /// `error <= bound`.
    pub holds: bool,
    /// `weighted_entropy <= harmonic_bound`.
    pub entropy_holds: bool,
}

/// Checks `error <= H1 - gamma (1 + ln t)` after every `t > 2` splits, where
/// `history[t]` is the ledger after `t` splits. Also checks the weighted
/// entropy against the harmonic sum it telescopes to. The harmonic sum is
/// smaller than `1 + ln t`, so `W` itself may exceed the logarithmic bound;
/// `error` is what the logarithmic bound is about.
pub fn check_boost_bound(history: &[EntropyLedger], gamma: f64) -> Vec<BoundCheck> {
    let Some(first) = history.first() else {
        return Vec::new();
    };
    let h1 = first.root_entropy;
    let mut harmonic = 0.0;
    let mut out = Vec::new();
    for (t, l) in history.iter().enumerate().skip(1) {
        harmonic += 1.0 / t as f64;
        if t <= 2 {
            continue;
        }
        let bound = h1 - gamma * (1.0 + (t as f64).ln());
        let harmonic_bound = h1 - gamma * harmonic;
        out.push(BoundCheck {
            splits: t,
            error: l.error,
            weighted_entropy: l.weighted_entropy,
            bound,
            harmonic_bound,
            holds: l.error <= bound + 1e-12,
            entropy_holds: l.weighted_entropy <= harmonic_bound + 1e-9,
        });
    }
    out
}
