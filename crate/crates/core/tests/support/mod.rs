//! Test-only oracles, independent of the library's detector internals.
#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn gaussian_stream(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}

/// Exact ADWIN over raw values: every split point is checked on every
/// insertion, and on detection everything older than the strongest cut is
/// discarded. Returns the indices of detecting insertions.
pub struct ExactAdwin {
    delta: f64,
    window: Vec<f64>,
    pub last_means: Option<(f64, f64)>,
}

const MIN_SIDE: usize = 5;

impl ExactAdwin {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            window: Vec::new(),
            last_means: None,
        }
    }

    pub fn width(&self) -> usize {
        self.window.len()
    }

    pub fn add(&mut self, value: f64) -> bool {
        self.last_means = None;
        self.window.push(value);
        let n = self.window.len();
        if n < 2 * MIN_SIDE {
            return false;
        }
        let nf = n as f64;
        let total: f64 = self.window.iter().sum();
        let mean = total / nf;
        let variance = self.window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
        let ln_term = (2.0 / (self.delta / nf)).ln();

        let mut best: Option<(usize, f64, f64, f64)> = None;
        let mut prefix = 0.0;
        for n0 in 1..n {
            prefix += self.window[n0 - 1];
            let n1 = n - n0;
            if n0 < MIN_SIDE || n1 < MIN_SIDE {
                continue;
            }
            let mu0 = prefix / n0 as f64;
            let mu1 = (total - prefix) / n1 as f64;
            let harmonic = 1.0 / (1.0 / n0 as f64 + 1.0 / n1 as f64);
            let eps =
                (2.0 / harmonic * variance * ln_term).sqrt() + 2.0 / (3.0 * harmonic) * ln_term;
            let margin = (mu0 - mu1).abs() - eps;
            if margin > 0.0 && best.is_none_or(|b| margin > b.1) {
                best = Some((n0, margin, mu0, mu1));
            }
        }
        match best {
            Some((n0, _, mu0, mu1)) => {
                self.window.drain(..n0);
                self.last_means = Some((mu0, mu1));
                true
            }
            None => false,
        }
    }
}

pub fn exact_adwin_detections(delta: f64, values: &[f64]) -> Vec<usize> {
    let mut oracle = ExactAdwin::new(delta);
    values
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| oracle.add(v).then_some(i))
        .collect()
}

/// eCDF distance by direct counting at every pooled point.
pub fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    a.iter()
        .chain(b)
        .map(|&x| (ecdf(a, x) - ecdf(b, x)).abs())
        .fold(0.0, f64::max)
}

/// KSWIN decisions recomputed from scratch for every element.
pub fn brute_kswin(alpha: f64, window: usize, stat: usize, values: &[f64]) -> Vec<bool> {
    let n = (window - stat) as f64;
    let m = stat as f64;
    let threshold = (-(alpha / 2.0).ln() / 2.0).sqrt() * ((n + m) / (n * m)).sqrt();
    (0..values.len())
        .map(|i| {
            if i + 1 < window {
                return false;
            }
            let w = &values[i + 1 - window..=i];
            brute_ks(&w[..window - stat], &w[window - stat..]) > threshold
        })
        .collect()
}
