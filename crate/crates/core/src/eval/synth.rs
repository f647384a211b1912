//! Seeded synthetic multiclass data.
//!
//! Data features use indices `1..=d`; index 0 is left free for the constant
//! feature. The same spec always produces the same examples, byte for byte.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::example::{DatasetMeta, SparseExample};
use crate::tree::ceil_log2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    /// Classes are the leaves of a random axis-aligned box partition.
    HierarchicalClusters,
    /// Label is the nearest of K random unit-norm centers.
    Voronoi,
    /// Gaussian class prototypes with Zipf-distributed class frequencies.
    ZipfTail,
    /// Voronoi data, sorted by label inside consecutive blocks.
    NonstationaryBlocks,
}

impl Structure {
    pub const ALL: [Structure; 4] = [
        Structure::HierarchicalClusters,
        Structure::Voronoi,
        Structure::ZipfTail,
        Structure::NonstationaryBlocks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Structure::HierarchicalClusters => "hierarchical-clusters",
            Structure::Voronoi => "voronoi",
            Structure::ZipfTail => "zipf-tail",
            Structure::NonstationaryBlocks => "nonstationary-blocks",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Structure::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown structure '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_classes: u32,
    pub dimensions: u32,
    pub num_examples: usize,
    pub structure: Structure,
    /// Probability that a label is replaced by a uniformly random class.
    pub noise: f64,
    pub seed: u64,
    /// Norm of the Gaussian perturbation around a voronoi center, or the
    /// shrink factor of each box for hierarchical clusters.
    pub spread: f64,
    /// Zipf exponent of the class frequencies (zipf-tail only).
    pub zipf_exponent: f64,
    /// Examples per sorted block (nonstationary-blocks only).
    pub block_len: usize,
}

impl SynthSpec {
    pub fn new(structure: Structure, num_classes: u32, dimensions: u32, num_examples: usize) -> Self {
        SynthSpec {
            num_classes,
            dimensions,
            num_examples,
            structure,
            noise: 0.0,
            seed: 0,
            spread: 1.0,
            zipf_exponent: 1.0,
            block_len: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::domain("num_classes must be positive"));
        }
        if self.dimensions == 0 {
            return Err(Error::domain("dimensions must be positive"));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::domain(format!("noise {} outside [0, 1]", self.noise)));
        }
        if !(self.spread.is_finite() && self.spread >= 0.0) {
            return Err(Error::domain("spread must be finite and non-negative"));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return Err(Error::domain("zipf exponent must be finite and non-negative"));
        }
        if self.block_len == 0 {
            return Err(Error::domain("block length must be positive"));
        }
        Ok(())
    }

    fn rngs(&self) -> (ChaCha8Rng, ChaCha8Rng) {
        let structure = ChaCha8Rng::seed_from_u64(self.seed);
        let mut sample = ChaCha8Rng::seed_from_u64(self.seed);
        sample.set_stream(1);
        (structure, sample)
    }

    /// Meta of the generated data; the feature space includes index 0.
    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            num_classes: self.num_classes,
            num_raw_features: self.dimensions as u64 + 1,
            example_count: self.num_examples as u64,
        }
    }
}

fn to_example(label: u32, x: &[f64]) -> SparseExample {
    let features = x
        .iter()
        .enumerate()
        .map(|(i, &v)| (i as u64 + 1, v as f32))
        .collect();
    SparseExample::new(label, features)
}

fn gaussian(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit_centers(rng: &mut impl Rng, k: u32, d: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| loop {
            let mut c = gaussian(rng, d);
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                c.iter_mut().for_each(|v| *v /= norm);
                break c;
            }
        })
        .collect()
}

/// `center` plus isotropic noise whose expected squared norm is `spread^2`.
fn perturb(rng: &mut impl Rng, center: &[f64], spread: f64) -> Vec<f64> {
    let scale = spread / (center.len() as f64).sqrt();
    center
        .iter()
        .map(|&c| c + scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn nearest(centers: &[Vec<f64>], x: &[f64]) -> u32 {
    let mut best = (f64::INFINITY, 0);
    for (k, c) in centers.iter().enumerate() {
        let d2: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best.0 {
            best = (d2, k as u32);
        }
    }
    best.1
}

fn relabel(rng: &mut impl Rng, label: u32, spec: &SynthSpec) -> u32 {
    if spec.noise > 0.0 && rng.random_bool(spec.noise) {
        rng.random_range(0..spec.num_classes)
    } else {
        label
    }
}

#[derive(Debug, Clone)]
enum Cell {
    Leaf(u32),
    Split {
        axis: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A random axis-aligned partition of `[-1, 1]^d` into K labelled boxes,
/// grown breadth first so its depth is `ceil(log2 K)`.
#[derive(Debug, Clone)]
pub struct BoxPartition {
    cells: Vec<Cell>,
    /// `(lo, hi)` corners of each class's box.
    boxes: Vec<(Vec<f64>, Vec<f64>)>,
}

impl BoxPartition {
    pub fn from_spec(spec: &SynthSpec) -> Result<Self> {
        spec.validate()?;
        let (mut rng, _) = spec.rngs();
        Ok(Self::grow(&mut rng, spec.num_classes, spec.dimensions as usize))
    }

    fn grow(rng: &mut impl Rng, k: u32, d: usize) -> Self {
        let mut cells = vec![Cell::Leaf(0)];
        let mut frontier = std::collections::VecDeque::new();
        frontier.push_back((0usize, vec![-1.0; d], vec![1.0; d]));
        while frontier.len() < k as usize {
            let (cell, lo, hi) = frontier.pop_front().expect("frontier is never empty");
            let axis = rng.random_range(0..d);
            let threshold = lo[axis] + (hi[axis] - lo[axis]) * rng.random_range(0.3..0.7);
            let (left, right) = (cells.len(), cells.len() + 1);
            cells.push(Cell::Leaf(0));
            cells.push(Cell::Leaf(0));
            cells[cell] = Cell::Split {
                axis,
                threshold,
                left,
                right,
            };
            let mut left_hi = hi.clone();
            left_hi[axis] = threshold;
            let mut right_lo = lo.clone();
            right_lo[axis] = threshold;
            frontier.push_back((left, lo, left_hi));
            frontier.push_back((right, right_lo, hi));
        }
        let mut labels: Vec<u32> = (0..k).collect();
        rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), rng);
        let mut boxes = vec![(Vec::new(), Vec::new()); k as usize];
        for ((cell, lo, hi), label) in frontier.into_iter().zip(labels) {
            cells[cell] = Cell::Leaf(label);
            boxes[label as usize] = (lo, hi);
        }
        BoxPartition { cells, boxes }
    }

    /// The class whose box contains `x` (dense, `d` coordinates).
    pub fn classify(&self, x: &[f64]) -> u32 {
        let mut i = 0;
        loop {
            match self.cells[i] {
                Cell::Leaf(label) => return label,
                Cell::Split {
                    axis,
                    threshold,
                    left,
                    right,
                } => i = if x[axis] < threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> u32 {
        fn walk(cells: &[Cell], i: usize) -> u32 {
            match cells[i] {
                Cell::Leaf(_) => 0,
                Cell::Split { left, right, .. } => 1 + walk(cells, left).max(walk(cells, right)),
            }
        }
        walk(&self.cells, 0)
    }

    /// Uniform draw from the class box shrunk about its center by `spread`.
    fn sample(&self, rng: &mut impl Rng, class: u32, spread: f64) -> Vec<f64> {
        let (lo, hi) = &self.boxes[class as usize];
        lo.iter()
            .zip(hi)
            .map(|(&l, &h)| {
                let (mid, half) = (0.5 * (l + h), 0.5 * (h - l) * spread.min(1.0));
                if half > 0.0 {
                    rng.random_range(mid - half..mid + half)
                } else {
                    mid
                }
            })
            .collect()
    }
}

/// Dense coordinates of an example produced by [`generate`].
pub fn dense(x: &SparseExample, dimensions: u32) -> Vec<f64> {
    let mut v = vec![0.0; dimensions as usize];
    for &(i, val) in &x.features {
        if (1..=dimensions as u64).contains(&i) {
            v[i as usize - 1] = val as f64;
        }
    }
    v
}

pub fn generate(spec: &SynthSpec) -> Result<Vec<SparseExample>> {
    spec.validate()?;
    let (mut srng, mut rng) = spec.rngs();
    let k = spec.num_classes;
    let d = spec.dimensions as usize;
    let n = spec.num_examples;
    let mut out = Vec::with_capacity(n);
    match spec.structure {
        Structure::HierarchicalClusters => {
            let part = BoxPartition::grow(&mut srng, k, d);
            debug_assert_eq!(part.depth(), ceil_log2(k));
            for _ in 0..n {
                let class = rng.random_range(0..k);
                let x = part.sample(&mut rng, class, spec.spread);
                // sampled coordinates are narrowed to f32 on output, which can
                // move a point across a threshold
                let x: Vec<f64> = x.iter().map(|&v| v as f32 as f64).collect();
                let label = relabel(&mut rng, part.classify(&x), spec);
                out.push(to_example(label, &x));
            }
        }
        Structure::Voronoi | Structure::NonstationaryBlocks => {
            let centers = unit_centers(&mut srng, k, d);
            for _ in 0..n {
                let c = rng.random_range(0..k);
                let x: Vec<f64> = perturb(&mut rng, &centers[c as usize], spec.spread)
                    .iter()
                    .map(|&v| v as f32 as f64)
                    .collect();
                let label = relabel(&mut rng, nearest(&centers, &x), spec);
                out.push(to_example(label, &x));
            }
            if spec.structure == Structure::NonstationaryBlocks {
                for block in out.chunks_mut(spec.block_len) {
                    block.sort_by_key(|x| x.label);
                }
            }
        }
        Structure::ZipfTail => {
            let centers = unit_centers(&mut srng, k, d);
            let weights = (1..=k).map(|r| (r as f64).powf(-spec.zipf_exponent));
            let zipf = WeightedIndex::new(weights).map_err(|e| Error::domain(e.to_string()))?;
            for _ in 0..n {
                let c = zipf.sample(&mut rng) as u32;
                let x = perturb(&mut rng, &centers[c as usize], spec.spread);
                let label = relabel(&mut rng, c, spec);
                out.push(to_example(label, &x));
            }
        }
    }
    Ok(out)
}

/// Writes examples in the dataset text format, one per line.
pub fn write_dataset(path: impl AsRef<Path>, examples: &[SparseExample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for x in examples {
        writeln!(w, "{x}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_every_structure() {
        for st in Structure::ALL {
            let mut spec = SynthSpec::new(st, 12, 5, 300);
            spec.noise = 0.1;
            spec.seed = 9;
            let a = generate(&spec).unwrap();
            assert_eq!(a, generate(&spec).unwrap(), "{st}");
            spec.seed = 10;
            assert_ne!(a, generate(&spec).unwrap(), "{st}");
            assert_eq!(a.len(), 300);
            assert!(a.iter().all(|x| x.label < 12 && x.features.len() == 5));
            assert!(a.iter().all(|x| x.features.iter().all(|f| (1..=5).contains(&f.0))));
        }
    }

    #[test]
    fn names_round_trip() {
        for st in Structure::ALL {
            assert_eq!(st.name().parse::<Structure>().unwrap(), st);
        }
        assert!("tree".parse::<Structure>().is_err());
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = SynthSpec::new(Structure::Voronoi, 3, 2, 10);
        spec.noise = 1.5;
        assert!(generate(&spec).is_err());
        assert!(generate(&SynthSpec::new(Structure::Voronoi, 0, 2, 10)).is_err());
        assert!(generate(&SynthSpec::new(Structure::Voronoi, 3, 0, 10)).is_err());
    }

    #[test]
    fn noiseless_hierarchy_is_classified_by_its_partition() {
        let spec = SynthSpec::new(Structure::HierarchicalClusters, 64, 8, 5000);
        let part = BoxPartition::from_spec(&spec).unwrap();
        assert_eq!(part.depth(), 6);
        let data = generate(&spec).unwrap();
        for x in &data {
            assert_eq!(part.classify(&dense(x, 8)), x.label);
        }
        let mut seen = [false; 64];
        data.iter().for_each(|x| seen[x.label as usize] = true);
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn noise_rate_is_respected() {
        let mut spec = SynthSpec::new(Structure::HierarchicalClusters, 16, 4, 20_000);
        spec.noise = 0.2;
        let part = BoxPartition::from_spec(&spec).unwrap();
        let flipped = generate(&spec)
            .unwrap()
            .iter()
            .filter(|x| part.classify(&dense(x, 4)) != x.label)
            .count() as f64
            / 20_000.0;
        // a uniform relabel keeps the label with probability 1/16
        let expected = 0.2 * 15.0 / 16.0;
        assert!((flipped - expected).abs() < 0.01, "{flipped}");
    }

    #[test]
    fn zipf_frequencies_decay() {
        let spec = SynthSpec::new(Structure::ZipfTail, 20, 3, 50_000);
        let mut counts = [0usize; 20];
        generate(&spec).unwrap().iter().for_each(|x| counts[x.label as usize] += 1);
        let h20: f64 = (1..=20).map(|r| 1.0 / r as f64).sum();
        let p0 = counts[0] as f64 / 50_000.0;
        assert!((p0 - 1.0 / h20).abs() < 0.01, "{p0}");
        assert!(counts[0] > counts[5] && counts[5] > counts[19]);
    }

    #[test]
    fn voronoi_labels_are_nearest_centers() {
        let spec = SynthSpec::new(Structure::Voronoi, 7, 4, 1000);
        let centers = unit_centers(&mut spec.rngs().0, 7, 4);
        for x in generate(&spec).unwrap() {
            assert_eq!(nearest(&centers, &dense(&x, 4)), x.label);
        }
    }

    #[test]
    fn blocks_are_sorted() {
        let mut spec = SynthSpec::new(Structure::NonstationaryBlocks, 10, 3, 1050);
        spec.block_len = 100;
        let data = generate(&spec).unwrap();
        for block in data.chunks(100) {
            assert!(block.windows(2).all(|w| w[0].label <= w[1].label));
        }
        assert!(data[99].label > data[100].label);
    }

    #[test]
    fn written_file_parses_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.txt");
        let spec = SynthSpec::new(Structure::ZipfTail, 5, 3, 50);
        let data = generate(&spec).unwrap();
        write_dataset(&path, &data).unwrap();
        let back = crate::example::read_dataset(&path, &Default::default()).unwrap();
        assert_eq!(back, data);
    }
}
