//! Repeat-until-confident challenge policy.

use serde::{Deserialize, Serialize};

use super::{detect, BaselineProfile, Detector};
use crate::error::StatsError;

/// Stopping rule for repeated challenges.
///
/// Every clean trial multiplies the residual miss probability by
/// `per_trial_miss`; the device is accepted once the product reaches
/// `target_miss`. A timing rejection needs `confirmations` flagged trials, so
/// a single unlucky clean measurement does not condemn an honest device.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatPolicy {
    pub target_miss: f64,
    pub per_trial_miss: f64,
    pub confirmations: u32,
    pub max_trials: u32,
}

impl Default for RepeatPolicy {
    fn default() -> Self {
        RepeatPolicy { target_miss: 1e-3, per_trial_miss: 0.1, confirmations: 4, max_trials: 32 }
    }
}

impl RepeatPolicy {
    pub fn validate(&self) -> Result<(), StatsError> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.target_miss) {
            return Err(StatsError::InvalidParameter("target_miss must lie in (0, 1)".into()));
        }
        if !(self.per_trial_miss >= 0.0 && self.per_trial_miss < 1.0) {
            return Err(StatsError::InvalidParameter("per_trial_miss must lie in [0, 1)".into()));
        }
        if self.confirmations == 0 || self.max_trials == 0 {
            return Err(StatsError::InvalidParameter("confirmations and max_trials must be positive".into()));
        }
        Ok(())
    }

    /// Clean trials needed to reach the target with no flags along the way.
    pub fn clean_trials_needed(&self) -> u32 {
        let mut residual = 1.0;
        let mut n = 0;
        while !reached(residual, self.target_miss) {
            residual *= self.per_trial_miss;
            n += 1;
        }
        n.max(1)
    }
}

fn reached(residual: f64, target: f64) -> bool {
    residual <= target * (1.0 + 1e-9)
}

/// What the challenger observed for one challenge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TrialOutcome {
    Completed { value_ok: bool, duration_us: f64 },
    /// The device reported an interrupt during the scan; the trial is void.
    Interrupted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    ValueMismatch,
    Timing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    Reject(RejectReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub decision: Decision,
    pub challenges_issued: u32,
    pub flagged: u32,
    pub residual_miss: f64,
}

/// Issues challenges through `challenger` (called with the 0-based challenge
/// number) until the policy decides. A wrong accumulator rejects at once,
/// before timing is looked at.
pub fn repeat_policy<E, F>(
    profile: &BaselineProfile,
    detector: &Detector,
    policy: &RepeatPolicy,
    mut challenger: F,
) -> Result<PolicyDecision, E>
where
    E: From<StatsError>,
    F: FnMut(u32) -> Result<TrialOutcome, E>,
{
    policy.validate()?;
    let mut residual = 1.0;
    let mut flagged = 0;
    for issued in 1..=policy.max_trials {
        match challenger(issued - 1)? {
            TrialOutcome::Interrupted => continue,
            TrialOutcome::Completed { value_ok: false, .. } => {
                return Ok(PolicyDecision {
                    decision: Decision::Reject(RejectReason::ValueMismatch),
                    challenges_issued: issued,
                    flagged,
                    residual_miss: residual,
                });
            }
            TrialOutcome::Completed { value_ok: true, duration_us } => {
                if detect(profile, duration_us, detector)?.flagged {
                    flagged += 1;
                    if flagged >= policy.confirmations {
                        return Ok(PolicyDecision {
                            decision: Decision::Reject(RejectReason::Timing),
                            challenges_issued: issued,
                            flagged,
                            residual_miss: residual,
                        });
                    }
                } else {
                    residual *= policy.per_trial_miss;
                    if reached(residual, policy.target_miss) {
                        return Ok(PolicyDecision {
                            decision: Decision::Accept,
                            challenges_issued: issued,
                            flagged,
                            residual_miss: residual,
                        });
                    }
                }
            }
        }
    }
    Err(StatsError::MaxTrialsExceeded(policy.max_trials).into())
}

#[cfg(test)]
mod tests {
    use super::super::calibrate;
    use super::*;

    fn profile() -> BaselineProfile {
        calibrate(&(0..100).map(|i| 1000.0 + (i % 10) as f64).collect::<Vec<_>>()).unwrap()
    }

    fn run(policy: RepeatPolicy, outcomes: &[TrialOutcome]) -> Result<PolicyDecision, StatsError> {
        repeat_policy(&profile(), &Detector::percentile(), &policy, |i| Ok(outcomes[i as usize % outcomes.len()]))
    }

    const CLEAN: TrialOutcome = TrialOutcome::Completed { value_ok: true, duration_us: 1004.0 };
    const SLOW: TrialOutcome = TrialOutcome::Completed { value_ok: true, duration_us: 5000.0 };
    const WRONG: TrialOutcome = TrialOutcome::Completed { value_ok: false, duration_us: 1004.0 };

    #[test]
    fn confident_first_trial_is_enough() {
        let p = RepeatPolicy { per_trial_miss: 1e-4, ..Default::default() };
        let d = run(p, &[CLEAN]).unwrap();
        assert_eq!((d.decision, d.challenges_issued), (Decision::Accept, 1));
    }

    #[test]
    fn three_clean_trials_reach_one_in_a_thousand() {
        let p = RepeatPolicy::default();
        assert_eq!(p.clean_trials_needed(), 3);
        let d = run(p, &[CLEAN]).unwrap();
        assert_eq!((d.decision, d.challenges_issued), (Decision::Accept, 3));
        assert!((d.residual_miss - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn wrong_value_rejects_regardless_of_timing() {
        let d = run(RepeatPolicy::default(), &[WRONG]).unwrap();
        assert_eq!(d.decision, Decision::Reject(RejectReason::ValueMismatch));
        assert_eq!(d.challenges_issued, 1);
    }

    #[test]
    fn timing_rejection_needs_confirmation() {
        let d = run(RepeatPolicy::default(), &[SLOW]).unwrap();
        assert_eq!((d.decision, d.challenges_issued, d.flagged), (Decision::Reject(RejectReason::Timing), 4, 4));
        let d = run(RepeatPolicy::default(), &[SLOW, CLEAN, CLEAN, CLEAN]).unwrap();
        assert_eq!((d.decision, d.challenges_issued, d.flagged), (Decision::Accept, 4, 1));
    }

    #[test]
    fn interrupts_are_retried() {
        let d = run(RepeatPolicy::default(), &[TrialOutcome::Interrupted, CLEAN]).unwrap();
        assert_eq!((d.decision, d.challenges_issued), (Decision::Accept, 6));
    }

    #[test]
    fn cap_is_enforced() {
        let p = RepeatPolicy { max_trials: 5, ..Default::default() };
        assert_eq!(run(p, &[TrialOutcome::Interrupted]), Err(StatsError::MaxTrialsExceeded(5)));
    }

    #[test]
    fn bad_policies_are_rejected() {
        for p in [
            RepeatPolicy { target_miss: 0.0, ..Default::default() },
            RepeatPolicy { target_miss: 1.0, ..Default::default() },
            RepeatPolicy { per_trial_miss: 1.0, ..Default::default() },
            RepeatPolicy { confirmations: 0, ..Default::default() },
        ] {
            assert!(matches!(run(p, &[CLEAN]), Err(StatsError::InvalidParameter(_))));
        }
    }
}
