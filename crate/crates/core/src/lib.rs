//! Recall trees for online multiclass learning with many classes.
//!
//! A [`RecallTree`] routes each example down a binary tree of linear routers
//! to a node holding a short list of candidate classes, then scores only
//! those candidates. Training and prediction cost grows with the tree depth
//! and the candidate budget rather than with the number of classes.
//!
//! ```
//! use recall_tree::{Hyperparams, RecallTree, SparseExample};
//!
//! let params = Hyperparams { bits: 16, ..Hyperparams::for_classes(4) };
//! let mut tree = RecallTree::new(4, 3, params).unwrap();
//! for i in 0..400u32 {
//!     let y = i % 4;
//!     tree.train_example(&SparseExample::new(y, vec![(0, 1.0), (1 + (y % 2) as u64, 1.0)]))
//!         .unwrap();
//! }
//! let p = tree.predict(&SparseExample::new(0, vec![(0, 1.0), (1, 1.0)])).unwrap();
//! assert!(p.class < 4);
//! ```

pub mod baselines;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod example;
pub mod linear;
pub mod tree;

pub use baselines::{OaaModel, OaaPrediction};
pub use error::{Error, Result};
pub use eval::persist::{load_as, load_model, save_model, Model, ModelKind};
pub use example::{
    parse_example, read_dataset, stream_dataset, DatasetMeta, LabelMap, SparseExample,
    StreamOptions,
};
pub use linear::{BinaryLabel, ScorerKey, WeightStore};
pub use tree::{Hyperparams, Prediction, RecallTree, RouterScale, RouterSign};
