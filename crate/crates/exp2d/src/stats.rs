//! Streaming statistics: merge-able Welford accumulators, z-scores, a
//! two-sample Kolmogorov–Smirnov statistic, and ordinary least squares.
//!
//! Workers accumulate `(count, mean, M2)` independently and merge without
//! locks; the merge is associative so reductions are order-insensitive up to
//! floating-point roundoff.

use serde::{Deserialize, Serialize};

/// Merge-able single-variable accumulator (count, mean, M2).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Accumulator {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. parallel-merge of two accumulators.
    pub fn merge(&self, other: &Accumulator) -> Accumulator {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n1 = self.count as f64;
        let n2 = other.count as f64;
        let n = n1 + n2;
        let delta = other.mean - self.mean;
        Accumulator {
            count: self.count + other.count,
            mean: self.mean + delta * n2 / n,
            m2: self.m2 + other.m2 + delta * delta * n1 * n2 / n,
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        self.m2 / (self.count as f64 - 1.0)
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            return f64::INFINITY;
        }
        (self.variance() / self.count as f64).sqrt()
    }

    /// z-score of the mean against a target value.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target) / self.stderr()
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Accumulator::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// Two-sample Kolmogorov–Smirnov statistic `D = sup_x |F1(x) − F2(x)|`.
///
/// Returns `(d, d_critical)` at the given significance level; the null is
/// rejected when `d > d_critical`. Uses the asymptotic critical value
/// `c(a) √((n+m)/(nm))` with `c(0.05) ≈ 1.358`, `c(0.01) ≈ 1.628`.
pub fn ks_two_sample(a: &[f64], b: &[f64], significance: f64) -> (f64, f64) {
    assert!(!a.is_empty() && !b.is_empty(), "empty KS sample");
    let mut xs: Vec<f64> = a.to_vec();
    let mut ys: Vec<f64> = b.to_vec();
    xs.sort_by(|p, q| p.total_cmp(q));
    ys.sort_by(|p, q| p.total_cmp(q));
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = xs[i].min(ys[j]);
        while i < n && xs[i] <= x {
            i += 1;
        }
        while j < m && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let c = if significance <= 0.01 { 1.628 } else { 1.358 };
    let d_crit = c * (((n + m) as f64) / ((n * m) as f64)).sqrt();
    (d, d_crit)
}

/// Ordinary least-squares fit `y ≈ intercept + slope·x`.
///
/// Returns `(slope, intercept, slope_stderr)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    assert!(x.len() >= 2, "need at least two points for a line fit");
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - mx) * (xi - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dof = (x.len() as f64 - 2.0).max(1.0);
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let r = yi - intercept - slope * xi;
            r * r
        })
        .sum();
    let slope_stderr = (ss_res / dof / sxx).sqrt();
    (slope, intercept, slope_stderr)
}
