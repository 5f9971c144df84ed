//! Replication statistics and the queue-trend stability test.

use serde::Serialize;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

/// Sample mean with a 95% confidence half-width.
///
/// Equality is bitwise, so undefined (NaN) estimates compare equal to
/// themselves and reports can be checked for exact reproducibility.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub mean: f64,
    /// NaN with fewer than two samples.
    pub ci_halfwidth: f64,
}

impl PartialEq for Estimate {
    fn eq(&self, other: &Self) -> bool {
        self.mean.to_bits() == other.mean.to_bits() && self.ci_halfwidth.to_bits() == other.ci_halfwidth.to_bits()
    }
}

impl Estimate {
    /// Normal-approximation estimate over the finite samples.
    pub fn from_samples(samples: impl IntoIterator<Item = f64>) -> Self {
        let xs: Vec<f64> = samples.into_iter().filter(|x| x.is_finite()).collect();
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Estimate { mean: f64::NAN, ci_halfwidth: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let ci_halfwidth = if xs.len() < 2 {
            f64::NAN
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Z95 * (var / n).sqrt()
        };
        Estimate { mean, ci_halfwidth }
    }

    /// Whether `value` lies within `k` half-widths (a zero-width interval
    /// accepts only the mean itself).
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.ci_halfwidth.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityVerdict {
    Stable,
    Unstable,
    Inconclusive,
}

/// Linear trend fitted to a queue-length series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Trend {
    /// Growth per series step.
    pub slope: f64,
    pub ci_halfwidth: f64,
    pub mean: f64,
    pub verdict: StabilityVerdict,
}

/// Least-squares slope of `series` against its index with a 95% interval.
///
/// Unstable when the interval lies strictly above zero; stable when it
/// does not and the mean stays below `sqrt(window_slots)` (a shrinking
/// queue is draining its start-up backlog, not diverging).
pub fn queue_trend(series: &[f64], window_slots: u64) -> Trend {
    let n = series.len();
    let mean = if n == 0 { 0.0 } else { series.iter().sum::<f64>() / n as f64 };
    let bounded = mean < (window_slots as f64).sqrt();
    if n < 3 {
        let flat = series.iter().all(|&x| x == 0.0);
        return Trend {
            slope: 0.0,
            ci_halfwidth: f64::NAN,
            mean,
            verdict: if flat { StabilityVerdict::Stable } else { StabilityVerdict::Inconclusive },
        };
    }
    let nf = n as f64;
    let x_bar = (nf - 1.0) / 2.0;
    let sxx: f64 = (0..n).map(|i| (i as f64 - x_bar).powi(2)).sum();
    let sxy: f64 = series.iter().enumerate().map(|(i, y)| (i as f64 - x_bar) * (y - mean)).sum();
    let slope = sxy / sxx;
    let sse: f64 = series
        .iter()
        .enumerate()
        .map(|(i, y)| (y - mean - slope * (i as f64 - x_bar)).powi(2))
        .sum();
    let ci_halfwidth = Z95 * (sse / (nf - 2.0) / sxx).sqrt();
    let verdict = if slope - ci_halfwidth > 0.0 {
        StabilityVerdict::Unstable
    } else if bounded {
        StabilityVerdict::Stable
    } else {
        StabilityVerdict::Inconclusive
    };
    Trend { slope, ci_halfwidth, mean, verdict }
}
