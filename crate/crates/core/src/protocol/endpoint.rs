//! Device side of the protocol: an honest simulated device and a hostile stub.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::wire::{ChallengeMessage, DeviceStatus, Message, ResponseMessage};
use crate::checkpoint::{checkpoint_record_at, checkpoint_replay, Checkpoint, DeviceState, MemoryImage};
use crate::device::{simulate_challenge, Scenario};
use crate::error::{DeviceError, ProtocolError};
use crate::exec::derive_seed;

/// A reply frame and the time the device was busy producing it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reply {
    pub message: Message,
    pub busy_us: u64,
}

pub trait DeviceEndpoint {
    /// Handles one request; `None` means the device stays silent.
    fn handle(&mut self, request: Message) -> Result<Option<Reply>, ProtocolError>;
}

impl<T: DeviceEndpoint + ?Sized> DeviceEndpoint for Box<T> {
    fn handle(&mut self, request: Message) -> Result<Option<Reply>, ProtocolError> {
        (**self).handle(request)
    }
}

/// Honest device: replays its checkpoint on RESTORE and answers each
/// CHALLENGE with the simulated scan latency of its scenario.
#[derive(Clone, Debug)]
pub struct SimulatedDevice {
    scenario: Scenario,
    state: DeviceState,
    checkpoint: Checkpoint,
    restored_for: Option<u64>,
    trials: u64,
    noise_master: u64,
}

impl SimulatedDevice {
    pub fn new(scenario: Scenario) -> Result<Self, DeviceError> {
        scenario.validate()?;
        let full = scenario.scan_image()?;
        let (words, registers) = full.words().split_at(scenario.image_words);
        let image = MemoryImage::new(words.to_vec(), scenario.region_id.clone())?;
        let mut state = DeviceState::new(image, registers.to_vec());
        state.quiesced = scenario.quiesced;
        let checkpoint = checkpoint_record_at(&state, 0)?;
        let noise_master = derive_seed(scenario.master_seed, "device", 0);
        Ok(SimulatedDevice { scenario, state, checkpoint, restored_for: None, trials: 0, noise_master })
    }

    /// Reseeds the device's timing noise. By default it is derived from the
    /// scenario seed but kept apart from the stream `run_trials` uses, so a
    /// device never replays its own calibration samples.
    pub fn with_noise_seed(mut self, seed: u64) -> Self {
        self.noise_master = seed;
        self
    }

    /// The golden checkpoint; the verifier keeps a copy.
    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn state(&self) -> &DeviceState {
        &self.state
    }

    /// Ordinary operation between sessions: memory, registers and caches drift
    /// away from the checkpoint.
    pub fn disturb(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in self.state.image.words_mut().iter_mut().step_by(3) {
            *w = rng.random();
        }
        for r in self.state.registers.iter_mut() {
            *r = rng.random();
        }
        for v in self.state.volatile.iter_mut() {
            *v = rng.random();
        }
        self.restored_for = None;
    }

    fn run(&mut self, c: &ChallengeMessage) -> Result<Reply, ProtocolError> {
        let refuse = |status| Reply {
            message: Message::Response(ResponseMessage { session_id: c.session_id, accumulator: 0, status }),
            busy_us: 0,
        };
        if self.restored_for != Some(c.session_id) {
            return Ok(refuse(DeviceStatus::NotRestored));
        }
        let Ok(spec) = c.to_spec() else {
            return Ok(refuse(DeviceStatus::BadChallenge));
        };
        let scan = self.state.image.with_registers(&self.state.registers);
        if spec.check_shape(scan.word_count() as u64).is_err() {
            return Ok(refuse(DeviceStatus::BadChallenge));
        }
        let trial = self.trials;
        self.trials += 1;
        self.restored_for = None;
        let s = &self.scenario;
        let (result, m) = simulate_challenge(
            &scan,
            &spec,
            &s.model,
            &s.adversary,
            &s.noise,
            &s.name,
            trial,
            derive_seed(self.noise_master, "noise", trial),
        )?;
        let status = if m.interrupted { DeviceStatus::Interrupted } else { DeviceStatus::Ok };
        Ok(Reply {
            message: Message::Response(ResponseMessage { session_id: c.session_id, accumulator: result.accumulator, status }),
            busy_us: m.duration_us,
        })
    }
}

impl DeviceEndpoint for SimulatedDevice {
    fn handle(&mut self, request: Message) -> Result<Option<Reply>, ProtocolError> {
        match request {
            Message::Restore { session_id } => {
                checkpoint_replay(&self.checkpoint, &mut self.state).map_err(DeviceError::from)?;
                self.restored_for = Some(session_id);
                Ok(Some(Reply { message: Message::Restored { session_id }, busy_us: 0 }))
            }
            Message::Challenge(c) => self.run(&c).map(Some),
            other => Err(ProtocolError::UnexpectedMessage { expected: "RESTORE or CHALLENGE", got: other.kind() }),
        }
    }
}

/// Misbehaviours available to a device that controls its I/O channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hostility {
    /// Answers every challenge after the first with the first response.
    ReplayStale,
    /// Holds each response back for extra microseconds.
    Delay { extra_us: u64 },
    /// Returns a wrong accumulator with honest timing.
    WrongResult,
    /// Never answers a challenge.
    Silent,
}

#[derive(Clone, Debug)]
pub struct HostileDevice {
    inner: SimulatedDevice,
    hostility: Hostility,
    stale: Option<Reply>,
}

impl HostileDevice {
    pub fn new(inner: SimulatedDevice, hostility: Hostility) -> Self {
        HostileDevice { inner, hostility, stale: None }
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        self.inner.checkpoint()
    }
}

impl DeviceEndpoint for HostileDevice {
    fn handle(&mut self, request: Message) -> Result<Option<Reply>, ProtocolError> {
        if !matches!(request, Message::Challenge(_)) {
            return self.inner.handle(request);
        }
        if self.hostility == Hostility::Silent {
            return Ok(None);
        }
        if let (Hostility::ReplayStale, Some(stale)) = (self.hostility, &self.stale) {
            return Ok(Some(stale.clone()));
        }
        let Some(mut reply) = self.inner.handle(request)? else {
            return Ok(None);
        };
        match self.hostility {
            Hostility::ReplayStale => self.stale = Some(reply.clone()),
            Hostility::Delay { extra_us } => reply.busy_us += extra_us,
            Hostility::WrongResult => {
                if let Message::Response(r) = &mut reply.message {
                    r.accumulator = (r.accumulator + 1) % self.inner.scenario().p;
                }
            }
            Hostility::Silent => {}
        }
        Ok(Some(reply))
    }
}
