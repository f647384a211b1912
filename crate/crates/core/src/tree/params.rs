use crate::error::{Error, Result};
use crate::linear::{MAX_BITS, MIN_BITS};

/// Which binary label a router is trained toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RouterSign {
    /// Toward the child whose entropy grows least when the example is added.
    #[default]
    Corrected,
    /// `sign(H|left - H|right)` taken literally, which with the
    /// positive-margin-goes-left convention pushes toward the worse side.
    Literal,
}

/// How the entropy difference is turned into a router importance weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RouterScale {
    /// `m_n |dH|`: the change in count-weighted entropy, which stays of order
    /// one as the node fills up.
    #[default]
    Mass,
    /// `|dH|` with fraction weights, shrinking like `1/m_n`.
    Fraction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub max_depth: u32,
    pub num_candidates: u32,
    /// The `lambda` of the empirical Bernstein recall bound.
    pub depth_penalty: f32,
    pub bits: u32,
    pub learning_rate: f32,
    pub path_features: bool,
    /// Scales both deviation terms of the recall bound; 0 uses raw empirical
    /// recall.
    pub bernstein_multiplier: f32,
    pub router_sign: RouterSign,
    pub router_scale: RouterScale,
    pub adagrad: bool,
}

/// `ceil(log2 k)`, exact for every `k >= 1`.
pub fn ceil_log2(k: u32) -> u32 {
    k.max(1).next_power_of_two().trailing_zeros()
}

pub fn default_max_depth(num_classes: u32) -> u32 {
    ceil_log2(num_classes)
}

pub fn default_num_candidates(num_classes: u32) -> u32 {
    let f = (4.0 * (num_classes.max(1) as f64).log2()).ceil() as u32;
    f.max(1)
}

impl Hyperparams {
    pub fn for_classes(num_classes: u32) -> Self {
        Hyperparams {
            max_depth: default_max_depth(num_classes),
            num_candidates: default_num_candidates(num_classes),
            depth_penalty: 1.0,
            bits: 24,
            learning_rate: 1.0,
            path_features: true,
            bernstein_multiplier: 1.0,
            router_sign: RouterSign::Corrected,
            router_scale: RouterScale::Mass,
            adagrad: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Domain(msg));
        if self.num_candidates == 0 {
            return fail("num_candidates must be at least 1".into());
        }
        if !(MIN_BITS..=MAX_BITS).contains(&self.bits) {
            return fail(format!("bits must be in [{MIN_BITS}, {MAX_BITS}]"));
        }
        // node ids must stay addressable as u32
        if self.max_depth > 30 {
            return fail(format!("max_depth {} exceeds 30", self.max_depth));
        }
        if !(self.depth_penalty.is_finite() && self.depth_penalty >= 0.0) {
            return fail(format!("depth penalty must be >= 0, got {}", self.depth_penalty));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail(format!("learning rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.bernstein_multiplier.is_finite() && self.bernstein_multiplier >= 0.0) {
            return fail(format!(
                "bernstein multiplier must be >= 0, got {}",
                self.bernstein_multiplier
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_class_count() {
        let p = Hyperparams::for_classes(1024);
        assert_eq!((p.max_depth, p.num_candidates), (10, 40));
        assert_eq!(p.depth_penalty, 1.0);
        assert_eq!(p.learning_rate, 1.0);
        assert_eq!(p.bits, 24);
        assert!(p.path_features);
        assert_eq!(p.bernstein_multiplier, 1.0);

        let p = Hyperparams::for_classes(100);
        assert_eq!((p.max_depth, p.num_candidates), (7, 27));
        let p = Hyperparams::for_classes(1);
        assert_eq!((p.max_depth, p.num_candidates), (0, 1));
        let p = Hyperparams::for_classes(3);
        assert_eq!((p.max_depth, p.num_candidates), (2, 7));
    }

    #[test]
    fn ceil_log2_matches_float() {
        for k in 1..5000u32 {
            assert_eq!(ceil_log2(k), (k as f64).log2().ceil() as u32, "{k}");
        }
    }

    #[test]
    fn validation() {
        let ok = Hyperparams::for_classes(10);
        assert!(ok.validate().is_ok());
        for bad in [
            Hyperparams { num_candidates: 0, ..ok.clone() },
            Hyperparams { bits: 40, ..ok.clone() },
            Hyperparams { depth_penalty: -1.0, ..ok.clone() },
            Hyperparams { learning_rate: 0.0, ..ok.clone() },
            Hyperparams { bernstein_multiplier: f32::NAN, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
