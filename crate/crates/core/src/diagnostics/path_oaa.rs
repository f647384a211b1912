use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::example::SparseExample;
use crate::tree::RecallTree;

/// A one-against-all linear model over `(x, path_T(x))` that reproduces a
/// tree's plurality-label predictions. Weights on `x` are all zero, so only
/// the path indicators are stored: `(node, class) -> weight`.
///
/// Each node votes for its own plurality label with weight `2^depth`. The
/// halting node is the deepest node on a path, and its vote outweighs all of
/// its ancestors' votes together, so it decides the argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOaa {
    num_classes: u32,
    weights: BTreeMap<u32, (u32, f64)>,
}

impl PathOaa {
    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    /// Nonzero weights as `(node, class, weight)`, in node order.
    pub fn weights(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.weights.iter().map(|(&n, &(c, w))| (n, c, w))
    }

    /// Per-class scores for an example whose path indicators are `path`.
    pub fn scores(&self, path: &[u32]) -> Vec<f64> {
        let mut s = vec![0.0; self.num_classes as usize];
        for node in path {
            if let Some(&(c, w)) = self.weights.get(node) {
                s[c as usize] += w;
            }
        }
        s
    }

    /// Argmax of [`scores`](Self::scores), ties to the smaller class id.
    pub fn predict(&self, path: &[u32]) -> u32 {
        let mut best = (f64::NEG_INFINITY, 0);
        for (c, v) in self.scores(path).into_iter().enumerate() {
            if v > best.0 {
                best = (v, c as u32);
            }
        }
        best.1
    }

    pub fn predict_example(&self, tree: &RecallTree, x: &SparseExample) -> u32 {
        self.predict(&tree.route(x).path)
    }
}

pub fn build_path_oaa(tree: &RecallTree) -> Result<PathOaa> {
    if tree.examples_seen() == 0 {
        return Err(Error::NotTrained);
    }
    let weights = tree
        .nodes()
        .iter()
        .filter_map(|n| {
            let p = n.plurality()?;
            Some((n.id, (p, 2f64.powi(n.depth as i32))))
        })
        .collect();
    Ok(PathOaa {
        num_classes: tree.num_classes(),
        weights,
    })
}

/// Plurality label of the node where `x` halts.
pub fn plurality_prediction(tree: &RecallTree, x: &SparseExample) -> Option<u32> {
    tree.node(tree.route(x).node).plurality()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{Hyperparams, ROOT};

    #[test]
    fn depth_zero_predicts_root_plurality() {
        let params = Hyperparams {
            bits: 12,
            max_depth: 0,
            ..Hyperparams::for_classes(3)
        };
        let mut tree = RecallTree::new(3, 2, params).unwrap();
        for y in [2, 1, 2, 0] {
            tree.train_example(&SparseExample::new(y, vec![(1, 1.0)])).unwrap();
        }
        let oaa = build_path_oaa(&tree).unwrap();
        assert_eq!(oaa.weights().collect::<Vec<_>>(), vec![(ROOT, 2, 1.0)]);
        assert_eq!(oaa.predict(&[ROOT]), 2);
    }

    #[test]
    fn deepest_vote_wins() {
        let oaa = PathOaa {
            num_classes: 4,
            weights: [(0, (1, 1.0)), (1, (1, 2.0)), (3, (1, 4.0)), (7, (3, 8.0))].into(),
        };
        assert_eq!(oaa.predict(&[0, 1, 3, 7]), 3);
        assert_eq!(oaa.predict(&[0, 1, 3]), 1);
        assert_eq!(oaa.scores(&[0, 1, 3, 7]), vec![0.0, 7.0, 0.0, 8.0]);
    }

    #[test]
    fn untrained_tree_is_rejected() {
        let params = Hyperparams {
            bits: 12,
            ..Hyperparams::for_classes(3)
        };
        let tree = RecallTree::new(3, 2, params).unwrap();
        assert!(matches!(build_path_oaa(&tree), Err(Error::NotTrained)));
    }
}
