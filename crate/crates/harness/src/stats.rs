//! Small statistics used by comparisons and trend checks.

use statrs::distribution::{Binomial, DiscreteCDF};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman correlation (Pearson on average ranks). NaN when either side
/// is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Exact two-sided sign test on paired differences; zero differences are
/// dropped. Returns 1 when nothing is left.
pub fn sign_test_p(deltas: &[f64]) -> f64 {
    let wins = deltas.iter().filter(|&&d| d > 0.0).count() as u64;
    let losses = deltas.iter().filter(|&&d| d < 0.0).count() as u64;
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let dist = Binomial::new(0.5, n).expect("valid binomial");
    let k = wins.min(losses);
    (2.0 * dist.cdf(k)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn spearman_examples() {
        let x = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        assert_relative_eq!(spearman(&x, &[1.0, 2.0, 3.0, 4.0, 5.0, 60.0]), 1.0);
        assert_relative_eq!(spearman(&x, &[6.0, 5.0, 4.0, 3.0, 2.0, 1.0]), -1.0);
        assert!(spearman(&x, &[1.0; 6]).is_nan());
        assert!(spearman(&x, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]) > 0.0);
    }

    #[test]
    fn sign_test_examples() {
        assert_relative_eq!(sign_test_p(&[1.0; 5]), 0.0625, max_relative = 1e-12);
        assert_eq!(sign_test_p(&[0.0, 0.0]), 1.0);
        assert_eq!(sign_test_p(&[1.0, -1.0]), 1.0);
        assert_relative_eq!(sign_test_p(&[1.0, 1.0, 1.0, 1.0, -1.0]), 0.375, max_relative = 1e-12);
    }
}
