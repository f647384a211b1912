//! Binary model files.
//!
//! Layout, all integers little-endian and fixed width, floats `f32`:
//!
//! ```text
//! "RCLT" | version u8 | model-type u8 | body
//! ```
//!
//! Recall-tree body: `K u32, raw_features u64, bits u32, max_depth u32,
//! F u32, lambda f32, eta f32, bernstein_multiplier f32, flags u32,
//! node_count u32`, then per node `id u32, parent u32, left u32, right u32,
//! depth u32, total u64, hist_len u32, (class u32, count u64)*, cand_len u32,
//! class u32*`, then the router store and the class store. Absent links are
//! `u32::MAX`.
//!
//! OAA body: `K u32, examples_seen u64`, then the class store.
//!
//! A weight store is `bits u32, eta f32, adagrad u8`, the `2^bits` weights,
//! and the AdaGrad accumulators when the flag is set.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::baselines::OaaModel;
use crate::error::{Error, Result};
use crate::linear::WeightStore;
use crate::tree::{Hyperparams, RecallTree, RouterScale, RouterSign, TreeNode};

pub const MAGIC: [u8; 4] = *b"RCLT";
pub const FORMAT_VERSION: u8 = 1;

const NONE: u32 = u32::MAX;

const FLAG_PATH_FEATURES: u32 = 1;
const FLAG_LITERAL_ROUTER_SIGN: u32 = 1 << 1;
const FLAG_ADAGRAD: u32 = 1 << 2;
const FLAG_FRACTION_ROUTER_SCALE: u32 = 1 << 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ModelKind {
    RecallTree = 0,
    Oaa = 1,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::RecallTree => "recall-tree",
            ModelKind::Oaa => "oaa",
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(ModelKind::RecallTree),
            1 => Ok(ModelKind::Oaa),
            t => Err(Error::Format(format!("unknown model type tag {t}"))),
        }
    }
}

/// A model of either kind, as read from a file.
#[derive(Debug, Clone)]
pub enum Model {
    RecallTree(RecallTree),
    Oaa(OaaModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::RecallTree(_) => ModelKind::RecallTree,
            Model::Oaa(_) => ModelKind::Oaa,
        }
    }
}

pub trait Persist: Sized {
    const KIND: ModelKind;
    fn write_body(&self, w: &mut dyn Write) -> io::Result<()>;
    fn read_body(r: &mut dyn Read) -> Result<Self>;
    fn into_model(self) -> Model;
    fn from_model(m: Model) -> std::result::Result<Self, Model>;
}

pub(crate) fn read_exact(r: &mut (impl Read + ?Sized), buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Corrupt("file is truncated".into()),
        _ => Error::Io(e),
    })
}

pub(crate) fn read_u8(r: &mut (impl Read + ?Sized)) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b)?;
    Ok(b[0])
}

pub(crate) fn read_u32(r: &mut (impl Read + ?Sized)) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut (impl Read + ?Sized)) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f32(r: &mut (impl Read + ?Sized)) -> Result<f32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn opt_link(v: u32) -> Option<u32> {
    (v != NONE).then_some(v)
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Corrupt(msg.into())
}

impl Persist for RecallTree {
    const KIND: ModelKind = ModelKind::RecallTree;

    fn write_body(&self, w: &mut dyn Write) -> io::Result<()> {
        let p = &self.params;
        w.write_all(&self.num_classes.to_le_bytes())?;
        w.write_all(&self.num_raw_features.to_le_bytes())?;
        w.write_all(&p.bits.to_le_bytes())?;
        w.write_all(&p.max_depth.to_le_bytes())?;
        w.write_all(&p.num_candidates.to_le_bytes())?;
        w.write_all(&p.depth_penalty.to_le_bytes())?;
        w.write_all(&p.learning_rate.to_le_bytes())?;
        w.write_all(&p.bernstein_multiplier.to_le_bytes())?;
        let mut flags = 0;
        if p.path_features {
            flags |= FLAG_PATH_FEATURES;
        }
        if p.router_sign == RouterSign::Literal {
            flags |= FLAG_LITERAL_ROUTER_SIGN;
        }
        if p.adagrad {
            flags |= FLAG_ADAGRAD;
        }
        if p.router_scale == RouterScale::Fraction {
            flags |= FLAG_FRACTION_ROUTER_SCALE;
        }
        w.write_all(&flags.to_le_bytes())?;
        w.write_all(&(self.nodes.len() as u32).to_le_bytes())?;
        for n in &self.nodes {
            let (l, r) = n.children.unwrap_or((NONE, NONE));
            for v in [n.id, n.parent.unwrap_or(NONE), l, r, n.depth] {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&n.total().to_le_bytes())?;
            let hist = n.histogram();
            w.write_all(&(hist.len() as u32).to_le_bytes())?;
            for (class, count) in hist {
                w.write_all(&class.to_le_bytes())?;
                w.write_all(&count.to_le_bytes())?;
            }
            w.write_all(&(n.candidates().len() as u32).to_le_bytes())?;
            for c in n.candidates() {
                w.write_all(&c.to_le_bytes())?;
            }
        }
        let mut w = w;
        self.routers.write_to(&mut w)?;
        self.scorers.write_to(&mut w)
    }

    fn read_body(mut r: &mut dyn Read) -> Result<Self> {
        let num_classes = read_u32(r)?;
        let num_raw_features = read_u64(r)?;
        let bits = read_u32(r)?;
        let max_depth = read_u32(r)?;
        let num_candidates = read_u32(r)?;
        let depth_penalty = read_f32(r)?;
        let learning_rate = read_f32(r)?;
        let bernstein_multiplier = read_f32(r)?;
        let flags = read_u32(r)?;
        let known = FLAG_PATH_FEATURES
            | FLAG_LITERAL_ROUTER_SIGN
            | FLAG_ADAGRAD
            | FLAG_FRACTION_ROUTER_SCALE;
        if flags & !known != 0 {
            return Err(corrupt(format!("unknown flag bits {flags:#x}")));
        }
        let params = Hyperparams {
            max_depth,
            num_candidates,
            depth_penalty,
            bits,
            learning_rate,
            path_features: flags & FLAG_PATH_FEATURES != 0,
            bernstein_multiplier,
            router_sign: if flags & FLAG_LITERAL_ROUTER_SIGN != 0 {
                RouterSign::Literal
            } else {
                RouterSign::Corrected
            },
            router_scale: if flags & FLAG_FRACTION_ROUTER_SCALE != 0 {
                RouterScale::Fraction
            } else {
                RouterScale::Mass
            },
            adagrad: flags & FLAG_ADAGRAD != 0,
        };
        params
            .validate()
            .map_err(|e| corrupt(format!("hyperparameters: {e}")))?;
        if num_classes == 0 || num_raw_features == 0 {
            return Err(corrupt("empty class or feature space"));
        }

        let node_count = read_u32(r)?;
        if node_count == 0 {
            return Err(corrupt("tree has no root"));
        }
        let mut nodes = Vec::new();
        for i in 0..node_count {
            let id = read_u32(r)?;
            let parent = opt_link(read_u32(r)?);
            let left = read_u32(r)?;
            let right = read_u32(r)?;
            let depth = read_u32(r)?;
            let total = read_u64(r)?;
            if id != i {
                return Err(corrupt(format!("node {i} stored with id {id}")));
            }
            let children = match (opt_link(left), opt_link(right)) {
                (Some(l), Some(r)) if l < node_count && r < node_count && l > i && r > i => {
                    Some((l, r))
                }
                (None, None) => None,
                _ => return Err(corrupt(format!("node {i} has invalid children"))),
            };
            if parent.is_some_and(|p| p >= i) || (parent.is_none() != (i == 0)) {
                return Err(corrupt(format!("node {i} has invalid parent")));
            }
            if depth > max_depth || (children.is_some() && depth >= max_depth) {
                return Err(corrupt(format!("node {i} exceeds max depth")));
            }
            let hist_len = read_u32(r)?;
            let mut counts = Vec::new();
            for _ in 0..hist_len {
                let class = read_u32(r)?;
                let count = read_u64(r)?;
                if class >= num_classes || count == 0 {
                    return Err(corrupt(format!("node {i} has bad histogram entry")));
                }
                counts.push((class, count));
            }
            let cand_len = read_u32(r)?;
            if cand_len > num_classes.max(num_candidates) {
                return Err(corrupt(format!("node {i} has too many candidates")));
            }
            let mut candidates = Vec::new();
            for _ in 0..cand_len {
                let c = read_u32(r)?;
                if c >= num_classes {
                    return Err(corrupt(format!("node {i} has bad candidate {c}")));
                }
                candidates.push(c);
            }
            let node = TreeNode::from_parts(id, depth, parent, children, &counts, candidates);
            if node.total() != total {
                return Err(corrupt(format!("node {i} total does not match histogram")));
            }
            nodes.push(node);
        }

        let routers = WeightStore::read_from(&mut r)?;
        let scorers = WeightStore::read_from(&mut r)?;
        for s in [&routers, &scorers] {
            if s.bits() != bits || s.uses_adagrad() != params.adagrad {
                return Err(corrupt("weight store header disagrees with model header"));
            }
        }
        Ok(RecallTree {
            num_classes,
            num_raw_features,
            params,
            nodes,
            routers,
            scorers,
        })
    }

    fn into_model(self) -> Model {
        Model::RecallTree(self)
    }

    fn from_model(m: Model) -> std::result::Result<Self, Model> {
        match m {
            Model::RecallTree(t) => Ok(t),
            other => Err(other),
        }
    }
}

impl Persist for OaaModel {
    const KIND: ModelKind = ModelKind::Oaa;

    fn write_body(&self, w: &mut dyn Write) -> io::Result<()> {
        w.write_all(&self.num_classes.to_le_bytes())?;
        w.write_all(&self.examples_seen.to_le_bytes())?;
        let mut w = w;
        self.scorers.write_to(&mut w)
    }

    fn read_body(mut r: &mut dyn Read) -> Result<Self> {
        let num_classes = read_u32(r)?;
        if num_classes == 0 {
            return Err(corrupt("zero classes"));
        }
        let examples_seen = read_u64(r)?;
        let scorers = WeightStore::read_from(&mut r)?;
        Ok(OaaModel {
            num_classes,
            scorers,
            examples_seen,
        })
    }

    fn into_model(self) -> Model {
        Model::Oaa(self)
    }

    fn from_model(m: Model) -> std::result::Result<Self, Model> {
        match m {
            Model::Oaa(o) => Ok(o),
            other => Err(other),
        }
    }
}

pub fn write_model<M: Persist>(model: &M, w: &mut dyn Write) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&[FORMAT_VERSION, M::KIND as u8])?;
    model.write_body(w)
}

pub fn save_model<M: Persist>(model: &M, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_model(r: &mut dyn Read) -> Result<Model> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("missing magic header".into()))?;
    if magic != MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = read_u8(r).map_err(|_| Error::Format("missing format version".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let kind = ModelKind::from_tag(read_u8(r)?)?;
    let model = match kind {
        ModelKind::RecallTree => RecallTree::read_body(r)?.into_model(),
        ModelKind::Oaa => OaaModel::read_body(r)?.into_model(),
    };
    let mut trailing = [0u8; 1];
    match r.read(&mut trailing)? {
        0 => Ok(model),
        _ => Err(corrupt("trailing bytes after model")),
    }
}

/// Loads a model of any kind.
pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let mut r = BufReader::new(File::open(path)?);
    read_model(&mut r)
}

/// Loads a model that must be of kind `M`.
pub fn load_as<M: Persist>(path: impl AsRef<Path>) -> Result<M> {
    M::from_model(load_model(path)?).map_err(|other| Error::ModelType {
        expected: M::KIND.name(),
        found: other.kind().name(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example::SparseExample;

    fn small_tree() -> RecallTree {
        let mut p = Hyperparams::for_classes(6);
        p.bits = 12;
        let mut t = RecallTree::new(6, 8, p).unwrap();
        for i in 0..200u32 {
            let y = i % 6;
            let x = SparseExample::new(y, vec![(0, 1.0), (1 + (y as u64 % 7), 1.0)]);
            t.train_example(&x).unwrap();
        }
        t
    }

    fn bytes_of<M: Persist>(m: &M) -> Vec<u8> {
        let mut buf = Vec::new();
        write_model(m, &mut buf).unwrap();
        buf
    }

    #[test]
    fn header_layout() {
        let buf = bytes_of(&small_tree());
        assert_eq!(&buf[..4], b"RCLT");
        assert_eq!(buf[4], FORMAT_VERSION);
        assert_eq!(buf[5], 0);
        assert_eq!(u32::from_le_bytes(buf[6..10].try_into().unwrap()), 6);
        let oaa = OaaModel::new(3, 10, 1.0).unwrap();
        let buf = bytes_of(&oaa);
        assert_eq!(buf[5], 1);
        assert_eq!(buf.len(), 6 + 4 + 8 + (4 + 4 + 1) + 4 * 1024);
    }

    #[test]
    fn tree_round_trip_is_byte_identical() {
        let t = small_tree();
        let buf = bytes_of(&t);
        let back = match read_model(&mut buf.as_slice()).unwrap() {
            Model::RecallTree(t) => t,
            _ => panic!("wrong kind"),
        };
        assert_eq!(bytes_of(&back), buf);
        for i in 0..50u64 {
            let x = SparseExample::new(0, vec![(0, 1.0), (i % 8, 0.5)]);
            assert_eq!(t.predict(&x).unwrap(), back.predict(&x).unwrap());
        }
    }

    #[test]
    fn version_bump_is_a_format_error() {
        let mut buf = bytes_of(&small_tree());
        buf[4] += 1;
        assert!(matches!(read_model(&mut buf.as_slice()), Err(Error::Format(_))));
        let mut buf = bytes_of(&small_tree());
        buf[0] = b'X';
        assert!(matches!(read_model(&mut buf.as_slice()), Err(Error::Format(_))));
        let mut buf = bytes_of(&small_tree());
        buf[5] = 9;
        assert!(matches!(read_model(&mut buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_is_corruption() {
        let buf = bytes_of(&small_tree());
        for cut in [7, 40, buf.len() / 2, buf.len() - 1] {
            assert!(
                matches!(read_model(&mut &buf[..cut]), Err(Error::Corrupt(_))),
                "cut at {cut}"
            );
        }
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_model(&mut long.as_slice()), Err(Error::Corrupt(_))));
    }

    #[test]
    fn typed_load_checks_kind() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("oaa.bin");
        save_model(&OaaModel::new(3, 10, 1.0).unwrap(), &path).unwrap();
        match load_as::<RecallTree>(&path) {
            Err(Error::ModelType { expected, found }) => {
                assert_eq!((expected, found), ("recall-tree", "oaa"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(load_as::<OaaModel>(&path).is_ok());
    }
}
