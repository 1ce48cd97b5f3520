//! Challenge/response sessions between verifier and device.
//!
//! A session is RESTORE, RESTORED, CHALLENGE, RESPONSE. Timing starts when
//! the CHALLENGE frame has been sent, after the device acknowledged its
//! restore, and stops at the first byte of the RESPONSE.

mod endpoint;
mod transport;
pub mod wire;

pub use endpoint::{DeviceEndpoint, HostileDevice, Hostility, Reply, SimulatedDevice};
pub use transport::{serve_tcp, Channel, LoopbackChannel, TcpChannel, DEFAULT_JITTER_US};
pub use wire::{ChallengeMessage, DeviceStatus, Message, ResponseMessage};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::challenge::{multipass_seeded, ChallengeResult, ChallengeSpec};
use crate::checkpoint::MemoryImage;
use crate::error::{ProtocolError, StatsError};
use crate::stats::{detect, repeat_policy, BaselineProfile, Detector, PolicyDecision, RejectReason, RepeatPolicy, TrialOutcome, Verdict};

/// A response with the verifier's own timestamps around it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimedResponse {
    pub response: ResponseMessage,
    pub t_start: u64,
    pub t_end: u64,
}

impl TimedResponse {
    pub fn duration_us(&self) -> u64 {
        self.t_end - self.t_start
    }
}

/// Session identifiers: a 32-bit counter in the high half, so no two ever
/// repeat within 2^32 sessions, and 32 random bits in the low half.
#[derive(Clone, Debug)]
pub struct SessionIds {
    counter: u32,
    rng: ChaCha8Rng,
}

impl SessionIds {
    pub fn new(seed: u64) -> Self {
        SessionIds { counter: 0, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn next_id(&mut self) -> u64 {
        let id = ((self.counter as u64) << 32) | self.rng.next_u32() as u64;
        self.counter = self.counter.wrapping_add(1);
        id
    }
}

fn expect_session(expected: u64, got: u64) -> Result<(), ProtocolError> {
    if expected == got {
        Ok(())
    } else {
        Err(ProtocolError::SessionMismatch { expected, got })
    }
}

/// Runs one session on `channel`.
pub fn issue_challenge<C: Channel + ?Sized>(
    channel: &mut C,
    spec: &ChallengeSpec,
    session_id: u64,
) -> Result<TimedResponse, ProtocolError> {
    channel.send(&Message::Restore { session_id })?;
    match channel.recv()?.0 {
        Message::Restored { session_id: got } => expect_session(session_id, got)?,
        other => return Err(ProtocolError::UnexpectedMessage { expected: "RESTORED", got: other.kind() }),
    }
    let t_start = channel.send(&Message::Challenge(ChallengeMessage::from_spec(session_id, spec)))?;
    let (msg, t_end) = channel.recv()?;
    let response = match msg {
        Message::Response(r) => r,
        other => return Err(ProtocolError::UnexpectedMessage { expected: "RESPONSE", got: other.kind() }),
    };
    expect_session(session_id, response.session_id)?;
    match response.status {
        DeviceStatus::Ok | DeviceStatus::Interrupted => {}
        s => return Err(ProtocolError::DeviceFailure(s.code())),
    }
    Ok(TimedResponse { response, t_start, t_end: t_end.max(t_start) })
}

/// Verdict on a single response.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ResponseVerdict {
    Accept(Verdict),
    /// Timing is absent when the value check already failed.
    Reject { reason: RejectReason, timing: Option<Verdict> },
    /// The device was interrupted mid-scan; issue a fresh challenge.
    Retry,
}

impl ResponseVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, ResponseVerdict::Accept(_))
    }
}

/// Value check first, then the detector on the duration. Fails only when the
/// detector cannot run on `profile`.
pub fn verify_response(
    expected: &ChallengeResult,
    timed: &TimedResponse,
    profile: &BaselineProfile,
    detector: &Detector,
) -> Result<ResponseVerdict, StatsError> {
    if timed.response.accumulator != expected.accumulator {
        return Ok(ResponseVerdict::Reject { reason: RejectReason::ValueMismatch, timing: None });
    }
    if timed.response.status == DeviceStatus::Interrupted {
        return Ok(ResponseVerdict::Retry);
    }
    let v = detect(profile, timed.duration_us() as f64, detector)?;
    Ok(if v.flagged {
        ResponseVerdict::Reject { reason: RejectReason::Timing, timing: Some(v) }
    } else {
        ResponseVerdict::Accept(v)
    })
}

/// What `repeat_policy` needs to know about one response.
pub fn trial_outcome(expected: &ChallengeResult, timed: &TimedResponse) -> TrialOutcome {
    if timed.response.status == DeviceStatus::Interrupted && timed.response.accumulator == expected.accumulator {
        return TrialOutcome::Interrupted;
    }
    TrialOutcome::Completed {
        value_ok: timed.response.accumulator == expected.accumulator,
        duration_us: timed.duration_us() as f64,
    }
}

/// Shape of the challenges a verifier issues.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeShape {
    pub k: usize,
    pub p: u64,
    pub passes: u32,
    pub region_id: String,
}

/// Verifier state: the golden image, a source of fresh challenge randomness
/// and session identifiers.
#[derive(Clone, Debug)]
pub struct Verifier {
    golden: MemoryImage,
    shape: ChallengeShape,
    rng: ChaCha8Rng,
    sessions: SessionIds,
}

/// One completed session as the verifier recorded it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionRecord {
    pub spec: ChallengeSpec,
    pub expected: ChallengeResult,
    pub timed: TimedResponse,
}

impl Verifier {
    /// `golden` is the scanned checkpoint image, register file included.
    pub fn new(golden: MemoryImage, shape: ChallengeShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sessions = SessionIds::new(rng.next_u64());
        Verifier { golden, shape, rng, sessions }
    }

    pub fn golden(&self) -> &MemoryImage {
        &self.golden
    }

    pub fn fresh_spec(&mut self) -> Result<ChallengeSpec, ProtocolError> {
        let s = &self.shape;
        ChallengeSpec::random(&mut self.rng, s.k, s.p, s.passes, s.region_id.clone())
            .map_err(|e| ProtocolError::Device(e.into()))
    }

    /// One session with fresh randomness.
    pub fn session<C: Channel + ?Sized>(&mut self, channel: &mut C) -> Result<SessionRecord, ProtocolError> {
        let spec = self.fresh_spec()?;
        let expected = multipass_seeded(&self.golden, &spec).map_err(|e| ProtocolError::Device(e.into()))?;
        let timed = issue_challenge(channel, &spec, self.sessions.next_id())?;
        Ok(SessionRecord { spec, expected, timed })
    }

    /// Repeats sessions until `policy` decides.
    pub fn attest<C: Channel + ?Sized>(
        &mut self,
        channel: &mut C,
        profile: &BaselineProfile,
        detector: &Detector,
        policy: &RepeatPolicy,
    ) -> Result<PolicyDecision, ProtocolError> {
        repeat_policy(profile, detector, policy, |_| {
            let rec = self.session(channel)?;
            Ok(trial_outcome(&rec.expected, &rec.timed))
        })
    }
}
