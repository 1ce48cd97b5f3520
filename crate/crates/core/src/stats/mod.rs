//! Baseline calibration and the verifier's statistical decision pipeline.

mod detect;
mod hypothesis;
mod policy;

pub use detect::{
    confusion_report, detect, detect_chebyshev, detect_modified_z, detect_percentile, detect_zscore, BaselinePoints,
    ConfusionRow, Detector, Method, Verdict, CHEBYSHEV_K, MODIFIED_Z_SCALE, MODIFIED_Z_THRESHOLD, ZSCORE_THRESHOLD,
};
pub use hypothesis::{kolmogorov_q, ks_test, t_test, TestResult};
pub use policy::{repeat_policy, Decision, PolicyDecision, RejectReason, RepeatPolicy, TrialOutcome};

use serde::{Deserialize, Serialize};

use crate::error::StatsError;

/// Empirical summary of clean challenge latencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineProfile {
    pub samples: Vec<f64>,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    pub median: f64,
    /// Unscaled median absolute deviation.
    pub mad: f64,
    pub p2_5: f64,
    pub p97_5: f64,
}

/// Linear interpolation between closest ranks on sorted data.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the n - 1 denominator.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn calibrate(samples: &[f64]) -> Result<BaselineProfile, StatsError> {
    if samples.len() < 2 {
        return Err(StatsError::InsufficientSamples { needed: 2, got: samples.len() });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::InvalidParameter("samples must be finite".into()));
    }
    let sorted = sorted_copy(samples);
    let median = percentile_sorted(&sorted, 0.5);
    let deviations = sorted_copy(&samples.iter().map(|x| (x - median).abs()).collect::<Vec<_>>());
    Ok(BaselineProfile {
        samples: samples.to_vec(),
        n: samples.len(),
        mean: mean(samples),
        std: variance(samples).sqrt(),
        median,
        mad: percentile_sorted(&deviations, 0.5),
        p2_5: percentile_sorted(&sorted, 0.025),
        p97_5: percentile_sorted(&sorted, 0.975),
    })
}

impl BaselineProfile {
    /// Profile over every sample except the one at `skip`.
    pub fn without(&self, skip: usize) -> Result<BaselineProfile, StatsError> {
        let rest: Vec<f64> = self
            .samples
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != skip)
            .map(|(_, &x)| x)
            .collect();
        calibrate(&rest)
    }

    pub fn load(path: &std::path::Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// Sample autocorrelations and the whiteness decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlogram {
    /// `acf[l - 1]` is the lag-`l` autocorrelation.
    pub acf: Vec<f64>,
    /// Half-width of the 95% band, `1.96 / sqrt(n)`.
    pub band: f64,
    /// Lags whose autocorrelation falls outside the band.
    pub flagged_lags: Vec<usize>,
    /// Smallest number of flagged lags that rejects whiteness at the 5% level.
    pub reject_at: usize,
    pub white: bool,
}

/// Smallest `c >= 1` with `P(Binomial(m, 0.05) >= c) <= 0.05`.
fn exceedance_cutoff(m: usize) -> usize {
    let q: f64 = 0.05;
    let mut pmf = (1.0 - q).powi(m as i32);
    let mut tail = 1.0;
    for c in 1..=m {
        tail -= pmf;
        if tail <= 0.05 + 1e-12 {
            return c;
        }
        pmf *= (m - c + 1) as f64 / c as f64 * q / (1.0 - q);
    }
    m + 1
}

/// Lag-1..=`max_lag` autocorrelations. Each lag is compared against the
/// `1.96 / sqrt(n)` band; the series counts as white unless more lags fall
/// outside than chance allows at 95% confidence (a binomial count over the
/// tested lags).
pub fn serial_correlation(samples: &[f64], max_lag: usize) -> Result<Correlogram, StatsError> {
    let n = samples.len();
    if max_lag == 0 {
        return Err(StatsError::InvalidParameter("max_lag must be at least 1".into()));
    }
    if n <= max_lag {
        return Err(StatsError::InsufficientSamples { needed: max_lag + 1, got: n });
    }
    let m = mean(samples);
    let denom: f64 = samples.iter().map(|x| (x - m) * (x - m)).sum();
    if denom == 0.0 {
        return Err(StatsError::DegenerateSeries);
    }
    let acf: Vec<f64> = (1..=max_lag)
        .map(|lag| (0..n - lag).map(|t| (samples[t] - m) * (samples[t + lag] - m)).sum::<f64>() / denom)
        .collect();
    let band = 1.96 / (n as f64).sqrt();
    let flagged_lags: Vec<usize> = acf
        .iter()
        .enumerate()
        .filter(|(_, r)| r.abs() > band)
        .map(|(i, _)| i + 1)
        .collect();
    let reject_at = exceedance_cutoff(max_lag);
    Ok(Correlogram { white: flagged_lags.len() < reject_at, acf, band, flagged_lags, reject_at })
}

/// Bin counts over a shared range, for external plotting.
pub fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    if bins == 0 || hi <= lo {
        return counts;
    }
    let width = (hi - lo) / bins as f64;
    for &x in samples {
        if (lo..=hi).contains(&x) {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    counts
}
