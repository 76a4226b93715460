use super::DetectorError;

/// Count, mean and sum of squared deviations of a block of values.
///
/// Two blocks merge exactly (up to rounding) with the parallel variance
/// update, which is what lets ADWIN compress adjacent buckets.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindowStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl WindowStats {
    pub fn single(value: f64) -> Self {
        Self {
            count: 1,
            mean: value,
            m2: 0.0,
        }
    }

    pub fn from_values(values: &[f64]) -> Self {
        values
            .iter()
            .fold(Self::default(), |acc, &v| acc.merge(&Self::single(v)))
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sum(&self) -> f64 {
        self.mean * self.count as f64
    }

    /// Population variance; zero for empty or single-element blocks.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn push(&mut self, value: f64) {
        *self = self.merge(&Self::single(value));
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n_a = self.count as f64;
        let n_b = other.count as f64;
        let count = self.count + other.count;
        let n = count as f64;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * n_b / n;
        let m2 = self.m2 + other.m2 + delta * delta * n_a * n_b / n;
        Self { count, mean, m2 }
    }
}

/// Sup-norm distance between the empirical CDFs of two samples.
///
/// Both eCDFs are right-continuous and evaluated at every point of the
/// pooled sample, so tied values step together.
pub fn ks_statistic(sample_a: &[f64], sample_b: &[f64]) -> Result<f64, DetectorError> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(DetectorError::EmptySample);
    }
    let mut a = sample_a.to_vec();
    let mut b = sample_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(ks_sorted(&a, &b))
}

pub(crate) fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / n - j as f64 / m).abs());
    }
    // past this point one eCDF is 1 and the other only approaches it
    best
}

/// Hoeffding deviation bound `sqrt(ln(1/confidence) / 2n)` for means of
/// variables bounded in `[0, 1]`.
pub fn hoeffding_bound(n: u64, confidence: f64) -> Result<f64, DetectorError> {
    if n == 0 {
        return Err(DetectorError::InvalidSampleSize);
    }
    check_confidence(confidence)?;
    Ok(((1.0 / confidence).ln() / (2.0 * n as f64)).sqrt())
}

pub(crate) fn check_confidence(confidence: f64) -> Result<(), DetectorError> {
    if confidence > 0.0 && confidence < 1.0 {
        Ok(())
    } else {
        Err(DetectorError::InvalidConfidence(confidence))
    }
}

/// Critical value of the two-sample KS test at level `alpha` for sample
/// sizes `n` and `m`.
pub fn ks_threshold(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force eCDF distance: evaluates both eCDFs by counting at every
    /// pooled point.
    fn ecdf_distance(a: &[f64], b: &[f64]) -> f64 {
        let ecdf =
            |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        a.iter()
            .chain(b)
            .map(|&x| (ecdf(a, x) - ecdf(b, x)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn ks_examples() {
        assert_eq!(
            ks_statistic(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(),
            0.0
        );
        assert_eq!(
            ks_statistic(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]).unwrap(),
            1.0
        );
        let expected = ecdf_distance(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0, 5.0, 6.0]);
        assert_eq!(expected, 0.5);
        assert_eq!(
            ks_statistic(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0, 5.0, 6.0]).unwrap(),
            expected
        );
    }

    #[test]
    fn ks_rejects_empty() {
        assert_eq!(ks_statistic(&[], &[1.0]), Err(DetectorError::EmptySample));
        assert_eq!(ks_statistic(&[1.0], &[]), Err(DetectorError::EmptySample));
    }

    #[test]
    fn hoeffding_examples() {
        let e = hoeffding_bound(1, (-1.0f64).exp()).unwrap();
        assert!((e - 0.5f64.sqrt()).abs() < 1e-12);
        let e = hoeffding_bound(200, 0.002).unwrap();
        // ln(500) / 400 = 0.0155365..., sqrt = 0.124646...
        assert!((e - 0.124_646).abs() < 1e-5, "{e}");
        let quarter = hoeffding_bound(800, 0.002).unwrap();
        assert!((quarter * 2.0 - e).abs() < 1e-12);
    }

    #[test]
    fn hoeffding_rejects_bad_input() {
        assert!(hoeffding_bound(0, 0.1).is_err());
        assert!(hoeffding_bound(5, 0.0).is_err());
        assert!(hoeffding_bound(5, 1.0).is_err());
    }

    #[test]
    fn single_value_stats() {
        let s = WindowStats::single(3.5);
        assert_eq!(s.count(), 1);
        assert_eq!(s.mean(), 3.5);
        assert_eq!(s.variance(), 0.0);
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
    }

    proptest! {
        #[test]
        fn ks_matches_brute_force(
            a in proptest::collection::vec(-5i32..5, 1..40),
            b in proptest::collection::vec(-5i32..5, 1..40),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let fast = ks_statistic(&a, &b).unwrap();
            prop_assert!((fast - ecdf_distance(&a, &b)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&fast));
        }

        #[test]
        fn merge_matches_recomputation(
            values in proptest::collection::vec(-1.0e4f64..1.0e4, 1..200),
            split in 0usize..200,
        ) {
            let split = split.min(values.len());
            let (left, right) = values.split_at(split);
            let merged = WindowStats::from_values(left).merge(&WindowStats::from_values(right));

            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            prop_assert_eq!(merged.count(), values.len() as u64);
            prop_assert!((merged.mean() - mean).abs() <= 1e-9 * mean.abs().max(1.0));
            prop_assert!(rel_close(merged.variance(), var, 1e-9) || var < 1e-12);
        }
    }
}
