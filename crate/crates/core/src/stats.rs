//! Small statistical helpers shared by the metrics and detector-validation
//! pipelines: summary statistics, fixed-width histograms, and
//! Kolmogorov-Smirnov tests (one-sample uniform and two-sample).

use serde::Serialize;

/// Five-number-ish summary of a sample (n, mean, median, sd, max, quartiles).
///
/// Quartiles use linear interpolation between order statistics (the common
/// "type 7" rule); the median of an even-sized sample is the midpoint of the
/// two central values. `sd` is the sample standard deviation (n-1 divisor).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub max: f64,
    pub q1: f64,
    pub q3: f64,
}

impl SampleSummary {
    /// Summarize a sample. Returns `None` for empty input.
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let n = samples.len();
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            let ss = sorted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(SampleSummary {
            n,
            mean,
            median: quantile_sorted(&sorted, 0.5),
            sd,
            max: sorted[n - 1],
            q1: quantile_sorted(&sorted, 0.25),
            q3: quantile_sorted(&sorted, 0.75),
        })
    }
}

/// Linear-interpolation quantile of a pre-sorted sample (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    assert!((0.0..=1.0).contains(&q));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Fixed-width histogram starting at zero. Counts index `k` covers
/// `[k*bin_width, (k+1)*bin_width)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Bin non-negative values into fixed-width bins. Values below zero are
    /// rejected by debug assertion; the histogram spans up to the maximum
    /// observed value.
    pub fn from_values(values: &[f64], bin_width: f64) -> Self {
        assert!(bin_width > 0.0, "bin width must be positive");
        let mut counts: Vec<u64> = Vec::new();
        for &v in values {
            debug_assert!(v >= 0.0, "histogram values must be non-negative");
            let idx = (v / bin_width).floor() as usize;
            if idx >= counts.len() {
                counts.resize(idx + 1, 0);
            }
            counts[idx] += 1;
        }
        Histogram { bin_width, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Normalized bin masses (sum to 1 for non-empty input).
    pub fn masses(&self) -> Vec<f64> {
        let total = self.total();
        if total == 0 {
            return Vec::new();
        }
        self.counts
            .iter()
            .map(|&c| c as f64 / total as f64)
            .collect()
    }
}

/// Outcome of a two-sample Kolmogorov-Smirnov test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsOutcome {
    /// Maximum vertical ECDF distance.
    pub statistic: f64,
    /// Asymptotic p-value of the observed statistic.
    pub p_value: f64,
    /// True when the null (same distribution) is rejected at the requested
    /// significance level.
    pub rejected: bool,
    pub alpha: f64,
}

/// One-sample KS statistic of a sample against the uniform distribution on
/// `[0, 1)`.
pub fn ks_statistic_uniform(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty());
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = x.clamp(0.0, 1.0);
        let above = (i as f64 + 1.0) / n - cdf;
        let below = cdf - i as f64 / n;
        d = d.max(above).max(below);
    }
    d
}

/// One-sample KS test against U(0,1) at significance `alpha`, using the
/// asymptotic Kolmogorov distribution.
pub fn ks_test_uniform(samples: &[f64], alpha: f64) -> KsOutcome {
    let d = ks_statistic_uniform(samples);
    let en = (samples.len() as f64).sqrt();
    let p = ks_survival(en * d);
    KsOutcome {
        statistic: d,
        p_value: p,
        rejected: p < alpha,
        alpha,
    }
}

/// Two-sample KS statistic: the maximum vertical distance between the two
/// empirical CDFs.
pub fn ks_two_sample_statistic(xs: &[f64], ys: &[f64]) -> f64 {
    assert!(!xs.is_empty() && !ys.is_empty());
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = a[i].min(b[j]);
        while i < n && a[i] <= t {
            i += 1;
        }
        while j < m && b[j] <= t {
            j += 1;
        }
        let diff = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        d = d.max(diff);
    }
    d
}

/// Two-sample KS test at significance `alpha` using the asymptotic
/// distribution with the small-sample correction factor of Numerical Recipes.
pub fn ks_two_sample(xs: &[f64], ys: &[f64], alpha: f64) -> KsOutcome {
    let d = ks_two_sample_statistic(xs, ys);
    let n = xs.len() as f64;
    let m = ys.len() as f64;
    let en = (n * m / (n + m)).sqrt();
    let p = ks_survival((en + 0.12 + 0.11 / en) * d);
    KsOutcome {
        statistic: d,
        p_value: p,
        rejected: p < alpha,
        alpha,
    }
}

/// Survival function of the Kolmogorov distribution,
/// `Q(t) = 2 Σ_{j≥1} (-1)^{j-1} exp(-2 j² t²)`.
fn ks_survival(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = 2.0 * (-2.0 * (j as f64) * (j as f64) * t * t).exp();
        sum += sign * term;
        if term < 1e-10 {
            break;
        }
        sign = -sign;
    }
    sum.clamp(0.0, 1.0)
}
