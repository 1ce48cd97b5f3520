//! Verifier-side channels. Every timestamp is taken here, never by the device.

use std::collections::VecDeque;
use std::io::{ErrorKind, Read};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::endpoint::DeviceEndpoint;
use super::wire::{self, Message};
use crate::error::ProtocolError;

/// Default timestamp jitter of the loopback channel, in microseconds.
pub const DEFAULT_JITTER_US: u64 = 3;

/// One request/response link to a device. Timestamps are microseconds on the
/// verifier's clock.
pub trait Channel {
    /// Sends `msg`; returns the time the last byte left.
    fn send(&mut self, msg: &Message) -> Result<u64, ProtocolError>;
    /// Waits for the next frame; returns it with the arrival time of its first byte.
    fn recv(&mut self) -> Result<(Message, u64), ProtocolError>;
}

/// In-process byte-stream link to a device endpoint on a virtual clock.
///
/// Frames are encoded to bytes and parsed on each side. The device's busy
/// time advances the clock, and each timestamp the verifier reads is
/// perturbed by an independent uniform offset in `[-jitter_us, jitter_us]`,
/// so a measured duration is within `2 * jitter_us` of the device's.
pub struct LoopbackChannel<D> {
    device: D,
    clock_us: u64,
    jitter_us: u64,
    timeout_us: Option<u64>,
    rng: ChaCha8Rng,
    inbound: VecDeque<u8>,
    arrivals: VecDeque<u64>,
}

/// Clock origin, far enough from zero that negative jitter never underflows.
const LOOPBACK_EPOCH_US: u64 = 1 << 32;

impl<D: DeviceEndpoint> LoopbackChannel<D> {
    /// Zero-jitter channel: durations equal the device's busy time exactly.
    pub fn in_process(device: D) -> Self {
        Self::jittered(device, 0, 0)
    }

    pub fn jittered(device: D, jitter_us: u64, seed: u64) -> Self {
        LoopbackChannel {
            device,
            clock_us: LOOPBACK_EPOCH_US,
            jitter_us,
            timeout_us: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            inbound: VecDeque::new(),
            arrivals: VecDeque::new(),
        }
    }

    /// Replies slower than `timeout_us` are reported as `ChannelTimeout`.
    pub fn with_timeout(mut self, timeout_us: u64) -> Self {
        self.timeout_us = Some(timeout_us);
        self
    }

    pub fn device(&self) -> &D {
        &self.device
    }

    pub fn device_mut(&mut self) -> &mut D {
        &mut self.device
    }

    pub fn jitter_us(&self) -> u64 {
        self.jitter_us
    }

    fn stamp(&mut self, t: u64) -> u64 {
        if self.jitter_us == 0 {
            return t;
        }
        let j = self.jitter_us as i64;
        t.saturating_add_signed(self.rng.random_range(-j..=j))
    }
}

impl<D: DeviceEndpoint> Channel for LoopbackChannel<D> {
    fn send(&mut self, msg: &Message) -> Result<u64, ProtocolError> {
        let bytes = wire::encode(msg)?;
        let sent = self.stamp(self.clock_us);
        let (request, _) = wire::decode(&bytes)?;
        if let Some(reply) = self.device.handle(request)? {
            let arrival = self.clock_us.saturating_add(reply.busy_us);
            self.inbound.extend(wire::encode(&reply.message)?);
            self.arrivals.push_back(arrival);
        }
        Ok(sent)
    }

    fn recv(&mut self) -> Result<(Message, u64), ProtocolError> {
        let Some(arrival) = self.arrivals.pop_front() else {
            if let Some(t) = self.timeout_us {
                self.clock_us += t;
            }
            return Err(ProtocolError::ChannelTimeout);
        };
        if let Some(t) = self.timeout_us {
            if arrival.saturating_sub(self.clock_us) > t {
                self.clock_us += t;
                self.inbound.clear();
                self.arrivals.clear();
                return Err(ProtocolError::ChannelTimeout);
            }
        }
        self.clock_us = self.clock_us.max(arrival);
        let stamped = self.stamp(self.clock_us);
        let mut stream = self.inbound.make_contiguous() as &[u8];
        let before = stream.len();
        let msg = wire::read_frame(&mut stream)?.ok_or(ProtocolError::Closed)?;
        let used = before - stream.len();
        self.inbound.drain(..used);
        Ok((msg, stamped))
    }
}

/// TCP link on the real monotonic clock.
///
/// `time_scale` converts wall time to modeled time: a server that sleeps
/// `busy_us * time_scale` real microseconds is measured as `busy_us`.
pub struct TcpChannel {
    stream: TcpStream,
    epoch: Instant,
    time_scale: f64,
}

impl TcpChannel {
    pub fn connect<A: ToSocketAddrs>(addr: A, timeout: Duration, time_scale: f64) -> Result<Self, ProtocolError> {
        if !(time_scale > 0.0 && time_scale.is_finite()) {
            return Err(ProtocolError::MalformedFrame(format!("time scale {time_scale} must be positive")));
        }
        let stream = TcpStream::connect(addr)?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        Ok(TcpChannel { stream, epoch: Instant::now(), time_scale })
    }

    fn now_us(&self) -> u64 {
        (self.epoch.elapsed().as_secs_f64() * 1e6 / self.time_scale).round() as u64
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, msg: &Message) -> Result<u64, ProtocolError> {
        wire::write_frame(&mut self.stream, msg)?;
        Ok(self.now_us())
    }

    fn recv(&mut self) -> Result<(Message, u64), ProtocolError> {
        let mut first = [0u8; 1];
        loop {
            match self.stream.read(&mut first) {
                Ok(0) => return Err(ProtocolError::Closed),
                Ok(_) => break,
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    return Err(ProtocolError::ChannelTimeout);
                }
                Err(e) => return Err(e.into()),
            }
        }
        let t = self.now_us();
        Ok((wire::read_frame_after(first[0], &mut self.stream)?, t))
    }
}

/// Serves `device` on `listener`, one connection at a time, holding each
/// reply back for `busy_us * time_scale` real microseconds. Returns after
/// `max_connections` connections, or never when it is `None`.
pub fn serve_tcp<D: DeviceEndpoint>(
    listener: &TcpListener,
    device: &mut D,
    time_scale: f64,
    max_connections: Option<usize>,
) -> Result<(), ProtocolError> {
    for (served, conn) in listener.incoming().enumerate() {
        let mut stream = conn?;
        stream.set_nodelay(true)?;
        while let Some(request) = wire::read_frame(&mut stream)? {
            if let Some(reply) = device.handle(request)? {
                let hold = Duration::from_secs_f64(reply.busy_us as f64 * time_scale / 1e6);
                if !hold.is_zero() {
                    std::thread::sleep(hold);
                }
                wire::write_frame(&mut stream, &reply.message)?;
            }
        }
        if max_connections.is_some_and(|m| served + 1 >= m) {
            break;
        }
    }
    Ok(())
}
