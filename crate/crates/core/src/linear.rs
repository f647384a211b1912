//! Hashed weight stores and the importance-weighted logistic learner shared
//! by routers and class scorers.
//!
//! A store is a dense array of `2^bits` weights. A scorer is not an object of
//! its own: it is the view of a store through a [`ScorerKey`], with feature
//! `i` of scorer `k` living at `slot(k, i, bits)`. Collisions are accepted.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MIN_BITS: u32 = 10;
pub const MAX_BITS: u32 = 30;

/// Logistic margins are clamped to this magnitude before the sigmoid.
pub const MARGIN_CLAMP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Router,
    Class,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScorerKey {
    pub role: Role,
    pub id: u32,
}

impl ScorerKey {
    pub fn router(node: u32) -> Self {
        ScorerKey {
            role: Role::Router,
            id: node,
        }
    }

    pub fn class(class: u32) -> Self {
        ScorerKey {
            role: Role::Class,
            id: class,
        }
    }

    fn seed(self) -> u64 {
        let role = match self.role {
            Role::Router => 0,
            Role::Class => 1,
        };
        fmix64(((self.id as u64) << 1 | role) ^ 0x2545_f491_4f6c_dd1d)
    }
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// MurmurHash3's 64-bit finalizer.
#[inline]
pub fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^= k >> 33;
    k
}

#[inline]
fn slot_seeded(seed: u64, feature: u64, mask: u64) -> usize {
    (fmix64(seed ^ feature.wrapping_mul(GOLDEN)) & mask) as usize
}

/// Weight-array position of `feature` for scorer `key` in a store of
/// `2^bits` weights.
pub fn slot(key: ScorerKey, feature: u64, bits: u32) -> usize {
    debug_assert!((MIN_BITS..=MAX_BITS).contains(&bits));
    slot_seeded(key.seed(), feature, (1u64 << bits) - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryLabel {
    Positive,
    Negative,
}

impl BinaryLabel {
    pub fn sign(self) -> f64 {
        match self {
            BinaryLabel::Positive => 1.0,
            BinaryLabel::Negative => -1.0,
        }
    }

    pub fn from_sign(s: f64) -> Self {
        if s > 0.0 {
            BinaryLabel::Positive
        } else {
            BinaryLabel::Negative
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    bits: u32,
    learning_rate: f32,
    weights: Vec<f32>,
    /// Per-slot sum of squared gradients when AdaGrad is enabled.
    adagrad: Option<Vec<f32>>,
}

impl WeightStore {
    pub fn new(bits: u32, learning_rate: f32) -> Result<Self> {
        Self::build(bits, learning_rate, false)
    }

    pub fn with_adagrad(bits: u32, learning_rate: f32) -> Result<Self> {
        Self::build(bits, learning_rate, true)
    }

    fn build(bits: u32, learning_rate: f32, adagrad: bool) -> Result<Self> {
        if !(MIN_BITS..=MAX_BITS).contains(&bits) {
            return Err(Error::domain(format!(
                "bits must be in [{MIN_BITS}, {MAX_BITS}], got {bits}"
            )));
        }
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(Error::domain(format!(
                "learning rate must be positive and finite, got {learning_rate}"
            )));
        }
        let len = 1usize << bits;
        Ok(WeightStore {
            bits,
            learning_rate,
            weights: vec![0.0; len],
            adagrad: adagrad.then(|| vec![0.0; len]),
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn learning_rate(&self) -> f32 {
        self.learning_rate
    }

    pub fn uses_adagrad(&self) -> bool {
        self.adagrad.is_some()
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    fn mask(&self) -> u64 {
        (1u64 << self.bits) - 1
    }

    pub fn slot(&self, key: ScorerKey, feature: u64) -> usize {
        slot(key, feature, self.bits)
    }

    pub fn get(&self, key: ScorerKey, feature: u64) -> f32 {
        self.weights[self.slot(key, feature)]
    }

    pub fn set(&mut self, key: ScorerKey, feature: u64, w: f32) {
        let s = self.slot(key, feature);
        self.weights[s] = w;
    }

    pub fn margin(&self, key: ScorerKey, features: &[(u64, f32)]) -> f64 {
        let seed = key.seed();
        let mask = self.mask();
        features
            .iter()
            .map(|&(i, v)| v as f64 * self.weights[slot_seeded(seed, i, mask)] as f64)
            .sum()
    }

    /// One importance-weighted logistic SGD step toward `label`.
    pub fn learn(
        &mut self,
        key: ScorerKey,
        features: &[(u64, f32)],
        importance: f64,
        label: BinaryLabel,
    ) -> Result<()> {
        if !importance.is_finite() || importance < 0.0 {
            return Err(Error::domain(format!(
                "importance must be finite and non-negative, got {importance}"
            )));
        }
        if importance == 0.0 {
            return Ok(());
        }
        let y = label.sign();
        let m = self
            .margin(key, features)
            .clamp(-MARGIN_CLAMP, MARGIN_CLAMP);
        // -dloss/dmargin for loss ln(1 + exp(-y m)), scaled by importance.
        let grad = importance * y * sigmoid(-y * m);
        let eta = self.learning_rate as f64;
        let seed = key.seed();
        let mask = self.mask();
        match &mut self.adagrad {
            None => {
                let step = eta * grad;
                for &(i, v) in features {
                    let s = slot_seeded(seed, i, mask);
                    self.weights[s] = (self.weights[s] as f64 + step * v as f64) as f32;
                }
            }
            Some(acc) => {
                for &(i, v) in features {
                    let s = slot_seeded(seed, i, mask);
                    let g = grad * v as f64;
                    let sum = acc[s] as f64 + g * g;
                    acc[s] = sum as f32;
                    if sum > 0.0 {
                        self.weights[s] = (self.weights[s] as f64 + eta * g / sum.sqrt()) as f32;
                    }
                }
            }
        }
        Ok(())
    }

    pub(crate) fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&self.bits.to_le_bytes())?;
        w.write_all(&self.learning_rate.to_le_bytes())?;
        w.write_all(&[self.adagrad.is_some() as u8])?;
        write_f32s(w, &self.weights)?;
        if let Some(acc) = &self.adagrad {
            write_f32s(w, acc)?;
        }
        Ok(())
    }

    pub(crate) fn read_from(r: &mut impl Read) -> Result<Self> {
        let bits = crate::eval::persist::read_u32(r)?;
        let learning_rate = crate::eval::persist::read_f32(r)?;
        let adagrad = match crate::eval::persist::read_u8(r)? {
            0 => false,
            1 => true,
            b => return Err(Error::Corrupt(format!("bad adagrad flag {b}"))),
        };
        let mut store = Self::build(bits, learning_rate, adagrad)
            .map_err(|e| Error::Corrupt(format!("weight store header: {e}")))?;
        read_f32s(r, &mut store.weights)?;
        if let Some(acc) = &mut store.adagrad {
            read_f32s(r, acc)?;
        }
        if store.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Corrupt("non-finite weight".into()));
        }
        Ok(store)
    }
}

fn write_f32s(w: &mut impl Write, xs: &[f32]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(4 * 4096);
    for chunk in xs.chunks(4096) {
        buf.clear();
        for x in chunk {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_f32s(r: &mut impl Read, out: &mut [f32]) -> Result<()> {
    let mut buf = vec![0u8; 4 * 4096];
    for chunk in out.chunks_mut(4096) {
        let bytes = &mut buf[..4 * chunk.len()];
        crate::eval::persist::read_exact(r, bytes)?;
        for (x, b) in chunk.iter_mut().zip(bytes.chunks_exact(4)) {
            *x = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    const K: ScorerKey = ScorerKey {
        role: Role::Class,
        id: 3,
    };

    #[test]
    fn slot_is_deterministic_and_in_range() {
        assert_eq!(slot(K, 12345, 18), slot(K, 12345, 18));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100_000 {
            let key = ScorerKey {
                role: if rng.random() { Role::Router } else { Role::Class },
                id: rng.random(),
            };
            assert!(slot(key, rng.random(), 10) < 1024);
        }
    }

    #[test]
    fn slot_values_are_stable() {
        // Frozen so that model files stay portable across builds.
        assert_eq!(fmix64(0), 0);
        assert_eq!(fmix64(1), 0xb456_bcfc_34c2_cb2c);
        assert_eq!(slot(ScorerKey::router(0), 0, 24), 3_045_206);
        assert_eq!(slot(ScorerKey::class(0), 0, 24), 11_645_881);
        assert_eq!(slot(ScorerKey::class(7), 1000, 24), 10_155_443);
    }

    #[test]
    fn slot_buckets_are_uniform() {
        let buckets = 1usize << 10;
        let mut counts = vec![0u32; buckets];
        let n = 1_000_000u64;
        for i in 0..n {
            // distinct (key, feature) inputs: 1000 keys x 1000 features
            let key = ScorerKey {
                role: if i % 2 == 0 { Role::Router } else { Role::Class },
                id: (i / 1000) as u32,
            };
            counts[slot(key, i % 1000, 10)] += 1;
        }
        let expected = n as f64 / buckets as f64;
        let within = counts
            .iter()
            .filter(|&&c| (0.9 * expected..=1.1 * expected).contains(&(c as f64)))
            .count();
        assert!(within as f64 >= 0.99 * buckets as f64, "{within}/{buckets}");
    }

    #[test]
    fn rejects_bad_bits_and_rate() {
        assert!(WeightStore::new(9, 1.0).is_err());
        assert!(WeightStore::new(31, 1.0).is_err());
        assert!(WeightStore::new(10, 0.0).is_err());
        assert!(WeightStore::new(10, f32::NAN).is_err());
        assert_eq!(WeightStore::new(10, 1.0).unwrap().weights().len(), 1024);
    }

    #[test]
    fn margin_basics() {
        let mut s = WeightStore::new(16, 1.0).unwrap();
        assert_eq!(s.margin(K, &[(1, 1.0), (2, -3.0)]), 0.0);
        s.set(K, 5, 2.0);
        assert_eq!(s.margin(K, &[(5, 1.0)]), 2.0);
        s.set(K, 9, 0.5);
        assert_eq!(s.margin(K, &[(9, 1.0), (9, 1.0)]), 1.0);
    }

    #[test]
    fn first_update_is_half() {
        let mut s = WeightStore::new(16, 1.0).unwrap();
        s.learn(K, &[(4, 1.0)], 1.0, BinaryLabel::Positive).unwrap();
        assert_eq!(s.get(K, 4), 0.5);
    }

    #[test]
    fn zero_importance_is_noop() {
        let mut s = WeightStore::new(12, 1.0).unwrap();
        s.set(K, 1, 0.25);
        let before = s.clone();
        s.learn(K, &[(1, 1.0), (2, 2.0)], 0.0, BinaryLabel::Negative).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn bad_importance_is_domain_error() {
        let mut s = WeightStore::new(12, 1.0).unwrap();
        for imp in [f64::NAN, f64::INFINITY, -1.0] {
            assert!(matches!(
                s.learn(K, &[(1, 1.0)], imp, BinaryLabel::Positive),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn two_opposite_updates() {
        let mut s = WeightStore::new(16, 1.0).unwrap();
        let x = [(4u64, 1.0f32)];
        s.learn(K, &x, 1.0, BinaryLabel::Positive).unwrap();
        assert_eq!(s.get(K, 4), 0.5);
        s.learn(K, &x, 1.0, BinaryLabel::Negative).unwrap();
        let expected = 0.5 - sigmoid(0.5);
        assert!((s.get(K, 4) as f64 - expected).abs() < 1e-7);
        assert!((s.get(K, 4) as f64 - (-0.1225)).abs() < 1e-4);
    }

    #[test]
    fn margin_is_clamped_in_update() {
        let mut s = WeightStore::new(12, 1.0).unwrap();
        s.set(K, 1, 1e6);
        s.learn(K, &[(1, 1.0)], 1.0, BinaryLabel::Negative).unwrap();
        // sigmoid(50) ~ 1, so the step is ~ -1
        assert!((s.get(K, 1) as f64 - (1e6 - 1.0)).abs() < 0.1);
        assert!(s.weights().iter().all(|w| w.is_finite()));
    }

    #[test]
    fn adagrad_first_step_is_learning_rate() {
        let mut s = WeightStore::with_adagrad(12, 0.5).unwrap();
        s.learn(K, &[(1, 2.0)], 1.0, BinaryLabel::Positive).unwrap();
        // g = 0.5 * 2 = 1, acc = 1, step = eta * g / 1
        assert_eq!(s.get(K, 1), 0.5);
    }

    proptest! {
        #[test]
        fn learn_moves_margin_toward_label(
            feats in prop::collection::btree_map(0u64..1_000_000, 0.01f32..4.0, 1..8),
            preset in prop::collection::vec(-2.0f32..2.0, 8),
            importance in 0.01f64..5.0,
            positive in any::<bool>(),
        ) {
            let feats: Vec<_> = feats.into_iter().collect();
            let mut s = WeightStore::new(20, 1.0).unwrap();
            for ((i, _), w) in feats.iter().zip(&preset) {
                s.set(K, *i, *w);
            }
            let label = if positive { BinaryLabel::Positive } else { BinaryLabel::Negative };
            let before = s.margin(K, &feats);
            s.learn(K, &feats, importance, label).unwrap();
            let after = s.margin(K, &feats);
            prop_assert_eq!((after - before).signum(), label.sign());
        }

        #[test]
        fn margin_is_additive_over_disjoint_slots(
            a in prop::collection::vec((0u64..1000, -3.0f32..3.0), 0..6),
            b in prop::collection::vec((1000u64..2000, -3.0f32..3.0), 0..6),
            seed in any::<u64>(),
        ) {
            let mut s = WeightStore::new(22, 1.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for &(i, _) in a.iter().chain(&b) {
                s.set(K, i, rng.random_range(-1.0..1.0));
            }
            let slots_a: std::collections::HashSet<_> = a.iter().map(|&(i, _)| s.slot(K, i)).collect();
            prop_assume!(b.iter().all(|&(i, _)| !slots_a.contains(&s.slot(K, i))));
            let joined: Vec<_> = a.iter().chain(&b).copied().collect();
            let sum = s.margin(K, &a) + s.margin(K, &b);
            prop_assert!((s.margin(K, &joined) - sum).abs() < 1e-9);
        }
    }
}
