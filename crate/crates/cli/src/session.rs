//! Attestation sessions against a simulated or networked device.

use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, ValueEnum};
use serde::Serialize;
use timecheck_core::protocol::{
    serve_tcp, trial_outcome, Channel, ChallengeShape, DeviceEndpoint, DeviceStatus, HostileDevice, Hostility,
    LoopbackChannel, SimulatedDevice, TcpChannel, Verifier, DEFAULT_JITTER_US,
};
use timecheck_core::stats::{detect, repeat_policy, Decision, Detector, Method, RejectReason, RepeatPolicy, TrialOutcome};

use crate::scenario::{apply_attack, Attack, ProfileFile, ScenarioArgs};
use crate::{CliError, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DetectorArg {
    Percentile,
    Zscore,
    Modz,
    Chebyshev,
}

impl DetectorArg {
    pub fn method(self) -> Method {
        match self {
            DetectorArg::Percentile => Method::Percentile,
            DetectorArg::Zscore => Method::Zscore,
            DetectorArg::Modz => Method::ModifiedZ,
            DetectorArg::Chebyshev => Method::Chebyshev,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Sim,
    Tcp(String),
}

impl std::str::FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "sim" {
            return Ok(Target::Sim);
        }
        match s.strip_prefix("tcp://") {
            Some(addr) if !addr.is_empty() => Ok(Target::Tcp(addr.to_string())),
            _ => Err(format!("expected `sim` or `tcp://host:port`, got `{s}`")),
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct ChallengeArgs {
    /// Profile JSON written by `calibrate`.
    #[arg(long)]
    pub profile: PathBuf,
    /// `sim` or `tcp://host:port`.
    #[arg(long, default_value = "sim")]
    pub target: Target,
    /// Attack run by the simulated device.
    #[arg(long, value_enum, default_value_t = Attack::None)]
    pub attack: Attack,
    #[arg(long, value_enum, default_value_t = DetectorArg::Percentile)]
    pub detector: DetectorArg,
    /// Detector threshold [default depends on the detector].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Must match the profile when given.
    #[arg(long)]
    pub passes: Option<u32>,
    /// Seed for challenge randomness [default: operating-system entropy].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Timestamp jitter of the simulated channel, microseconds.
    #[arg(long, default_value_t = DEFAULT_JITTER_US)]
    pub jitter: u64,
    /// Flagged challenges needed to reject on timing.
    #[arg(long, default_value_t = RepeatPolicy::default().confirmations)]
    pub confirm: u32,
    /// Residual miss probability at which a clean device is accepted.
    #[arg(long, default_value_t = RepeatPolicy::default().target_miss)]
    pub target_miss: f64,
    /// Miss probability credited to each clean challenge.
    #[arg(long, default_value_t = RepeatPolicy::default().per_trial_miss)]
    pub per_trial_miss: f64,
    #[arg(long, default_value_t = RepeatPolicy::default().max_trials)]
    pub max_trials: u32,
    /// Wall seconds per modeled second on a TCP target; must match `serve`.
    #[arg(long, default_value_t = 1.0)]
    pub time_scale: f64,
    /// TCP read timeout, milliseconds.
    #[arg(long, default_value_t = 120_000)]
    pub timeout_ms: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SessionLine {
    pub index: u32,
    pub session_id: u64,
    pub duration_us: u64,
    pub value_ok: bool,
    pub interrupted: bool,
    pub score: Option<f64>,
    pub flagged: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerdictReport {
    pub decision: &'static str,
    pub reason: Option<&'static str>,
    pub target: String,
    pub attack: &'static str,
    pub detector: Detector,
    pub policy: RepeatPolicy,
    pub challenges_issued: u32,
    pub flagged: u32,
    pub residual_miss: f64,
    pub sessions: Vec<SessionLine>,
}

fn entropy_seed() -> u64 {
    use std::hash::{BuildHasher, Hasher};
    let mut h = std::collections::hash_map::RandomState::new().build_hasher();
    h.write_u128(std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_nanos()));
    h.finish()
}

pub fn cmd_challenge(args: &ChallengeArgs, out: &mut dyn Write) -> Result<(Outcome, VerdictReport), CliError> {
    let pf = ProfileFile::load(&args.profile)?;
    if let Some(p) = args.passes {
        if p != pf.scenario.passes {
            return Err(CliError::Usage(format!("--passes {p} does not match the profile's {} passes", pf.scenario.passes)));
        }
    }
    let mut detector = Detector::default_for(args.detector.method());
    if let Some(t) = args.threshold {
        detector.threshold = t;
    }
    if detector.threshold.is_nan() || detector.threshold <= 0.0 {
        return Err(CliError::Usage("--threshold must be positive".into()));
    }
    let policy = RepeatPolicy {
        target_miss: args.target_miss,
        per_trial_miss: args.per_trial_miss,
        confirmations: args.confirm,
        max_trials: args.max_trials,
    };
    policy.validate()?;

    let device = SimulatedDevice::new(apply_attack(&pf.scenario, args.attack)?)?;
    let golden = device.checkpoint().scan_image();
    let s = &pf.scenario;
    let shape = ChallengeShape { k: s.k, p: s.p, passes: s.passes, region_id: s.region_id.clone() };
    let seed = args.seed.unwrap_or_else(entropy_seed);
    let mut verifier = Verifier::new(golden, shape, seed);

    let mut channel: Box<dyn Channel> = match &args.target {
        Target::Sim => Box::new(LoopbackChannel::jittered(device, args.jitter, seed ^ 0x6a17)),
        Target::Tcp(addr) => Box::new(TcpChannel::connect(addr.as_str(), Duration::from_millis(args.timeout_ms), args.time_scale)?),
    };

    let mut sessions = Vec::new();
    let decision = repeat_policy(&pf.profile, &detector, &policy, |index| {
        let rec = verifier.session(channel.as_mut())?;
        let outcome = trial_outcome(&rec.expected, &rec.timed);
        let verdict = match outcome {
            TrialOutcome::Completed { value_ok: true, duration_us } => Some(detect(&pf.profile, duration_us, &detector)?),
            _ => None,
        };
        sessions.push(SessionLine {
            index,
            session_id: rec.timed.response.session_id,
            duration_us: rec.timed.duration_us(),
            value_ok: rec.timed.response.accumulator == rec.expected.accumulator,
            interrupted: rec.timed.response.status == DeviceStatus::Interrupted,
            score: verdict.map(|v| v.score),
            flagged: verdict.map(|v| v.flagged),
        });
        Ok::<_, CliError>(outcome)
    })?;

    let (outcome, decision_name, reason) = match decision.decision {
        Decision::Accept => (Outcome::Accept, "accept", None),
        Decision::Reject(RejectReason::ValueMismatch) => (Outcome::Reject, "reject", Some("value_mismatch")),
        Decision::Reject(RejectReason::Timing) => (Outcome::Reject, "reject", Some("timing")),
    };
    let report = VerdictReport {
        decision: decision_name,
        reason,
        target: match &args.target {
            Target::Sim => "sim".into(),
            Target::Tcp(a) => format!("tcp://{a}"),
        },
        attack: args.attack.name(),
        detector,
        policy,
        challenges_issued: decision.challenges_issued,
        flagged: decision.flagged,
        residual_miss: decision.residual_miss,
        sessions,
    };
    serde_json::to_writer_pretty(&mut *out, &report).map_err(|e| CliError::Usage(e.to_string()))?;
    let _ = writeln!(out);
    Ok((outcome, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HostileArg {
    Replay,
    Delay,
    Wrong,
    Silent,
}

#[derive(Args, Clone, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub listen: String,
    /// Wall seconds per modeled second; 1e-3 makes a 9.6 s challenge take 9.6 ms.
    #[arg(long, default_value_t = 1.0)]
    pub time_scale: f64,
    /// Misbehave on the I/O channel.
    #[arg(long, value_enum)]
    pub hostile: Option<HostileArg>,
    /// Extra microseconds added by `--hostile delay`.
    #[arg(long, default_value_t = 4000)]
    pub delay_us: u64,
    /// Exit after this many connections.
    #[arg(long)]
    pub connections: Option<usize>,
}

pub fn cmd_serve(args: &ServeArgs, err: &mut dyn Write) -> Result<(), CliError> {
    if !(args.time_scale >= 0.0 && args.time_scale.is_finite()) {
        return Err(CliError::Usage("--time-scale must be non-negative".into()));
    }
    let device = SimulatedDevice::new(args.scenario.build()?)?;
    let mut endpoint: Box<dyn DeviceEndpoint> = match args.hostile {
        None => Box::new(device),
        Some(h) => Box::new(HostileDevice::new(
            device,
            match h {
                HostileArg::Replay => Hostility::ReplayStale,
                HostileArg::Delay => Hostility::Delay { extra_us: args.delay_us },
                HostileArg::Wrong => Hostility::WrongResult,
                HostileArg::Silent => Hostility::Silent,
            },
        )),
    };
    let listener = TcpListener::bind(&args.listen).map_err(|e| CliError::Io(PathBuf::from(&args.listen), e))?;
    let addr = listener.local_addr().map_err(|e| CliError::Io(PathBuf::from(&args.listen), e))?;
    let _ = writeln!(err, "serving on {addr}");
    serve_tcp(&listener, &mut endpoint, args.time_scale, args.connections)?;
    Ok(())
}
