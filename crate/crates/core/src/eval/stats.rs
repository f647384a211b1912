//! Significance of an accuracy difference between two models.

use statrs::function::erf::erfc;

use super::Accuracy;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquared {
    pub statistic: f64,
    /// Two-sided, one degree of freedom.
    pub p_value: f64,
}

/// 'N-1' chi-squared test on the 2x2 table of hits and misses of two models
/// evaluated on independent samples. Degenerate tables (an empty row or
/// column) give a statistic of zero.
pub fn n_minus_one_chi_squared(x: Accuracy, y: Accuracy) -> ChiSquared {
    let a = x.correct as f64;
    let b = (x.total - x.correct) as f64;
    let c = y.correct as f64;
    let d = (y.total - y.correct) as f64;
    let n = a + b + c + d;
    let denom = (a + b) * (c + d) * (a + c) * (b + d);
    if denom == 0.0 || n < 2.0 {
        return ChiSquared {
            statistic: 0.0,
            p_value: 1.0,
        };
    }
    let statistic = (a * d - b * c).powi(2) * (n - 1.0) / denom;
    ChiSquared {
        statistic,
        p_value: erfc((statistic / 2.0).sqrt()),
    }
}
