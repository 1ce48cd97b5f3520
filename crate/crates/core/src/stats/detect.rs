//! Single-point outlier detectors and FPR/FNR tables.

use serde::{Deserialize, Serialize};

use super::BaselineProfile;
use crate::error::StatsError;

pub const ZSCORE_THRESHOLD: f64 = 2.0;
pub const MODIFIED_Z_THRESHOLD: f64 = 2.5;
/// Normal-consistency constant for the modified z-score.
pub const MODIFIED_Z_SCALE: f64 = 0.6745;
pub const CHEBYSHEV_K: f64 = 31.6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Percentile,
    Zscore,
    ModifiedZ,
    Chebyshev,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Percentile => "percentile",
            Method::Zscore => "zscore",
            Method::ModifiedZ => "modified_z",
            Method::Chebyshev => "chebyshev",
        }
    }
}

/// A detector method plus its threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detector {
    pub method: Method,
    pub threshold: f64,
}

impl Detector {
    pub fn percentile() -> Self {
        Detector { method: Method::Percentile, threshold: 2.5 }
    }

    pub fn zscore() -> Self {
        Detector { method: Method::Zscore, threshold: ZSCORE_THRESHOLD }
    }

    pub fn modified_z() -> Self {
        Detector { method: Method::ModifiedZ, threshold: MODIFIED_Z_THRESHOLD }
    }

    pub fn chebyshev() -> Self {
        Detector { method: Method::Chebyshev, threshold: CHEBYSHEV_K }
    }

    pub fn default_for(method: Method) -> Self {
        match method {
            Method::Percentile => Self::percentile(),
            Method::Zscore => Self::zscore(),
            Method::ModifiedZ => Self::modified_z(),
            Method::Chebyshev => Self::chebyshev(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub method: Method,
    pub score: f64,
    pub threshold: f64,
    pub flagged: bool,
}

/// Flags points outside `[p2_5, p97_5]`. The score is the point's
/// percentile rank within the baseline (ties count half).
pub fn detect_percentile(profile: &BaselineProfile, point: f64) -> Verdict {
    let below = profile.samples.iter().filter(|&&x| x < point).count() as f64;
    let equal = profile.samples.iter().filter(|&&x| x == point).count() as f64;
    Verdict {
        method: Method::Percentile,
        score: 100.0 * (below + 0.5 * equal) / profile.n as f64,
        threshold: 2.5,
        flagged: point < profile.p2_5 || point > profile.p97_5,
    }
}

pub fn detect_zscore(profile: &BaselineProfile, point: f64, threshold: f64) -> Result<Verdict, StatsError> {
    if profile.std <= 0.0 {
        return Err(StatsError::DegenerateSeries);
    }
    let z = (point - profile.mean) / profile.std;
    Ok(Verdict { method: Method::Zscore, score: z, threshold, flagged: z.abs() > threshold })
}

pub fn detect_modified_z(profile: &BaselineProfile, point: f64, threshold: f64) -> Result<Verdict, StatsError> {
    if profile.mad <= 0.0 {
        return Err(StatsError::DegenerateSeries);
    }
    let m = MODIFIED_Z_SCALE * (point - profile.median) / profile.mad;
    Ok(Verdict { method: Method::ModifiedZ, score: m, threshold, flagged: m.abs() > threshold })
}

/// Flags points more than `k_sigma` standard deviations from the mean; by
/// Chebyshev's inequality the false positive rate is at most `1 / k_sigma^2`
/// whatever the baseline distribution.
pub fn detect_chebyshev(profile: &BaselineProfile, point: f64, k_sigma: f64) -> Result<Verdict, StatsError> {
    if profile.std <= 0.0 {
        return Err(StatsError::DegenerateSeries);
    }
    let k = (point - profile.mean).abs() / profile.std;
    Ok(Verdict { method: Method::Chebyshev, score: k, threshold: k_sigma, flagged: k > k_sigma })
}

pub fn detect(profile: &BaselineProfile, point: f64, detector: &Detector) -> Result<Verdict, StatsError> {
    match detector.method {
        Method::Percentile => Ok(detect_percentile(profile, point)),
        Method::Zscore => detect_zscore(profile, point, detector.threshold),
        Method::ModifiedZ => detect_modified_z(profile, point, detector.threshold),
        Method::Chebyshev => detect_chebyshev(profile, point, detector.threshold),
    }
}

/// Where the clean points of a confusion table come from.
#[derive(Clone, Copy, Debug)]
pub enum BaselinePoints<'a> {
    /// Each calibration sample, judged against a profile built from the
    /// other samples.
    LeaveOneOut,
    /// Separate clean measurements judged against the full profile.
    HeldOut(&'a [f64]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRow {
    pub method: Method,
    pub threshold: f64,
    pub false_positives: usize,
    pub baseline_n: usize,
    pub false_negatives: usize,
    pub attack_n: usize,
}

impl ConfusionRow {
    pub fn fpr(&self) -> f64 {
        self.false_positives as f64 / self.baseline_n as f64
    }

    pub fn fnr(&self) -> f64 {
        self.false_negatives as f64 / self.attack_n as f64
    }

    /// Pools the counts of another row for the same detector.
    pub fn merge(&mut self, other: &ConfusionRow) {
        self.false_positives += other.false_positives;
        self.baseline_n += other.baseline_n;
        self.false_negatives += other.false_negatives;
        self.attack_n += other.attack_n;
    }
}

/// FPR = flagged clean points / clean points; FNR = unflagged attack points /
/// attack points; one row per detector.
pub fn confusion_report(
    profile: &BaselineProfile,
    baseline: BaselinePoints<'_>,
    attack_points: &[f64],
    detectors: &[Detector],
) -> Result<Vec<ConfusionRow>, StatsError> {
    if attack_points.is_empty() {
        return Err(StatsError::InsufficientSamples { needed: 1, got: 0 });
    }
    let loo_profiles: Vec<BaselineProfile> = match baseline {
        BaselinePoints::LeaveOneOut => {
            if profile.n < 3 {
                return Err(StatsError::InsufficientSamples { needed: 3, got: profile.n });
            }
            (0..profile.n).map(|i| profile.without(i)).collect::<Result<_, _>>()?
        }
        BaselinePoints::HeldOut([]) => {
            return Err(StatsError::InsufficientSamples { needed: 1, got: 0 });
        }
        BaselinePoints::HeldOut(_) => Vec::new(),
    };

    detectors
        .iter()
        .map(|det| {
            let false_positives = match baseline {
                BaselinePoints::LeaveOneOut => {
                    let mut fp = 0;
                    for (i, p) in loo_profiles.iter().enumerate() {
                        fp += detect(p, profile.samples[i], det)?.flagged as usize;
                    }
                    fp
                }
                BaselinePoints::HeldOut(points) => {
                    let mut fp = 0;
                    for &x in points {
                        fp += detect(profile, x, det)?.flagged as usize;
                    }
                    fp
                }
            };
            let mut false_negatives = 0;
            for &x in attack_points {
                false_negatives += !detect(profile, x, det)?.flagged as usize;
            }
            Ok(ConfusionRow {
                method: det.method,
                threshold: det.threshold,
                false_positives,
                baseline_n: match baseline {
                    BaselinePoints::LeaveOneOut => profile.n,
                    BaselinePoints::HeldOut(points) => points.len(),
                },
                false_negatives,
                attack_n: attack_points.len(),
            })
        })
        .collect()
}
