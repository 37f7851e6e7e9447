//! Stabilised reductions shared by every module.
//!
//! All sums run in index order so that results are bit-reproducible.

/// `log Σ exp(x_k)` with max subtraction. Returns `-inf` for an empty input
/// or when every term is `-inf`.
pub fn logsumexp<I>(values: I) -> f64
where
    I: IntoIterator<Item = f64>,
    I::IntoIter: Clone,
{
    let iter = values.into_iter();
    let max = iter.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut acc = Neumaier::default();
    for v in iter {
        acc.add((v - max).exp());
    }
    max + acc.sum().ln()
}

/// Slice form of [`logsumexp`].
pub fn logsumexp_slice(values: &[f64]) -> f64 {
    logsumexp(values.iter().copied())
}

/// Compensated (Neumaier) accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub struct Neumaier {
    sum: f64,
    carry: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Compensated sum in index order.
pub fn sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = Neumaier::default();
    for v in values {
        acc.add(v);
    }
    acc.sum()
}

/// Compensated inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// `Σ |a_k - b_k|`.
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum(a.iter().zip(b).map(|(x, y)| (x - y).abs()))
}

pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_matches_naive_on_moderate_values() {
        let v = [0.3, -1.2, 2.5, 0.0];
        let naive: f64 = v.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((logsumexp_slice(&v) - naive).abs() < 1e-14);
    }

    #[test]
    fn logsumexp_survives_large_magnitudes() {
        let v = [1000.0, 1000.0];
        assert!((logsumexp_slice(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        let w = [-1000.0, -1001.0];
        let expected = -1000.0 + (1.0 + (-1f64).exp()).ln();
        assert!((logsumexp_slice(&w) - expected).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_of_neg_infinities() {
        assert_eq!(logsumexp_slice(&[]), f64::NEG_INFINITY);
        assert_eq!(
            logsumexp_slice(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
        assert_eq!(logsumexp_slice(&[f64::NEG_INFINITY, 0.0]), 0.0);
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(sum(v), 2.0);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.1, 0.5, 0.5, 0.2]), 1);
    }
}
