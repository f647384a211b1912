/// Empirical Bernstein lower confidence bound on a node's true recall:
///
/// `r - multiplier * (sqrt(lambda * r * (1 - r) / m) + lambda / m)`
///
/// where `r` is the empirical recall over `m` observations. A node with no
/// observations gets `-inf` so it is never preferred over one with data.
pub fn recall_lower_bound(recall_hat: f64, m: u64, lambda: f64, multiplier: f64) -> f64 {
    if m == 0 {
        return f64::NEG_INFINITY;
    }
    if multiplier == 0.0 {
        return recall_hat;
    }
    let m = m as f64;
    let variance = (recall_hat * (1.0 - recall_hat)).max(0.0);
    recall_hat - multiplier * ((lambda * variance / m).sqrt() + lambda / m)
}
