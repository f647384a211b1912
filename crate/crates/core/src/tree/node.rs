use std::collections::HashMap;
use std::f64::consts::LN_2;

/// `c ln c` with `0 ln 0 = 0`.
fn xlnx(c: u64) -> f64 {
    if c == 0 {
        0.0
    } else {
        let c = c as f64;
        c * c.ln()
    }
}

/// `(c1, id1)` ranks ahead of `(c2, id2)`: larger count first, then smaller id.
#[inline]
fn ranks_ahead(c1: u64, id1: u32, c2: u64, id2: u32) -> bool {
    c1 > c2 || (c1 == c2 && id1 < id2)
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub id: u32,
    pub depth: u32,
    pub parent: Option<u32>,
    /// `(left, right)` once materialized.
    pub children: Option<(u32, u32)>,
    histogram: HashMap<u32, u64>,
    total: u64,
    /// Top classes by count, best first.
    candidates: Vec<u32>,
    candidate_mass: u64,
    /// Running `sum_c count_c ln count_c`, so entropies cost O(1).
    plogp: f64,
}

impl TreeNode {
    /// A fresh node. When `all_classes` is given, the candidate list starts as
    /// every class in id order (the candidate budget covers all of them).
    pub fn new(id: u32, depth: u32, parent: Option<u32>, all_classes: Option<u32>) -> Self {
        let candidates = all_classes.map_or_else(Vec::new, |k| (0..k).collect());
        TreeNode {
            id,
            depth,
            parent,
            children: None,
            histogram: HashMap::new(),
            total: 0,
            candidates,
            candidate_mass: 0,
            plogp: 0.0,
        }
    }

    pub(crate) fn from_parts(
        id: u32,
        depth: u32,
        parent: Option<u32>,
        children: Option<(u32, u32)>,
        counts: &[(u32, u64)],
        candidates: Vec<u32>,
    ) -> Self {
        let histogram: HashMap<u32, u64> = counts.iter().copied().collect();
        let total = counts.iter().map(|&(_, c)| c).sum();
        let plogp = counts.iter().map(|&(_, c)| xlnx(c)).sum();
        let candidate_mass = candidates
            .iter()
            .map(|c| histogram.get(c).copied().unwrap_or(0))
            .sum();
        TreeNode {
            id,
            depth,
            parent,
            children,
            histogram,
            total,
            candidates,
            candidate_mass,
            plogp,
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, class: u32) -> u64 {
        self.histogram.get(&class).copied().unwrap_or(0)
    }

    /// Histogram entries sorted by class id.
    pub fn histogram(&self) -> Vec<(u32, u64)> {
        let mut h: Vec<_> = self.histogram.iter().map(|(&k, &v)| (k, v)).collect();
        h.sort_unstable();
        h
    }

    pub fn candidates(&self) -> &[u32] {
        &self.candidates
    }

    pub fn is_leaf(&self, max_depth: u32) -> bool {
        self.children.is_none() || self.depth >= max_depth
    }

    /// Fraction of observations whose label is among the candidates.
    pub fn recall_hat(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.candidate_mass as f64 / self.total as f64
        }
    }

    /// Most frequent class, ties to the smaller id.
    pub fn plurality(&self) -> Option<u32> {
        self.histogram
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&k, _)| k)
    }

    /// Counts one more observation of `class` and keeps the candidate list the
    /// top `budget` classes. Only `class` can move, and only upward, so this is
    /// O(budget).
    pub fn observe(&mut self, class: u32, budget: u32) {
        let count = {
            let c = self.histogram.entry(class).or_insert(0);
            *c += 1;
            *c
        };
        self.total += 1;
        self.plogp += xlnx(count) - xlnx(count - 1);

        let pos = if let Some(pos) = self.candidates.iter().position(|&k| k == class) {
            self.candidate_mass += 1;
            pos
        } else if self.candidates.len() < budget as usize {
            self.candidates.push(class);
            self.candidate_mass += count;
            self.candidates.len() - 1
        } else {
            let last = self.candidates.len() - 1;
            let tail = self.candidates[last];
            let tail_count = self.count(tail);
            if !ranks_ahead(count, class, tail_count, tail) {
                return;
            }
            self.candidates[last] = class;
            self.candidate_mass = self.candidate_mass + count - tail_count;
            last
        };
        self.promote(pos);
    }

    fn promote(&mut self, mut pos: usize) {
        let class = self.candidates[pos];
        let count = self.count(class);
        while pos > 0 {
            let prev = self.candidates[pos - 1];
            if !ranks_ahead(count, class, self.count(prev), prev) {
                break;
            }
            self.candidates.swap(pos, pos - 1);
            pos -= 1;
        }
    }

    /// Empirical label entropy in bits, optionally with one extra observation
    /// of `extra`.
    pub fn entropy_bits(&self, extra: Option<u32>) -> f64 {
        let (n, plogp) = match extra {
            None => (self.total, self.plogp),
            Some(y) => {
                let c = self.count(y);
                (self.total + 1, self.plogp - xlnx(c) + xlnx(c + 1))
            }
        };
        if n == 0 {
            return 0.0;
        }
        let n = n as f64;
        ((n.ln() - plogp / n) / LN_2).max(0.0)
    }
}
