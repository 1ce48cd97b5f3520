//! Binary frames.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "TCH1"
//! 4       4     payload length L (u32 LE)
//! 8       L     payload; byte 0 is the message type
//! 8+L     4     CRC-32 (IEEE) over bytes 0..8+L (u32 LE)
//! ```
//!
//! Payloads, all integers little-endian:
//!
//! ```text
//! 0x01 RESTORE    session_id u64
//! 0x02 RESTORED   session_id u64
//! 0x03 CHALLENGE  session_id u64, k u16, r[k] u64, x u64, p u64,
//!                 perm_seed u64, passes u32, region_len u16, region utf-8
//! 0x04 RESPONSE   session_id u64, accumulator u64, status u8
//! ```

use std::io::{Read, Write};

use crate::challenge::ChallengeSpec;
use crate::coefficients::RandomSeeds;
use crate::error::ProtocolError;
use crate::field::FieldParams;

pub const FRAME_MAGIC: [u8; 4] = *b"TCH1";
pub const MAX_PAYLOAD: usize = 1 << 20;

const HEADER_LEN: usize = 8;
const CRC_LEN: usize = 4;

const TYPE_RESTORE: u8 = 0x01;
const TYPE_RESTORED: u8 = 0x02;
const TYPE_CHALLENGE: u8 = 0x03;
const TYPE_RESPONSE: u8 = 0x04;

/// Status byte of a RESPONSE.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DeviceStatus {
    Ok,
    /// A non-maskable interrupt landed during the scan; the timing is void.
    Interrupted,
    /// CHALLENGE arrived without a matching RESTORE.
    NotRestored,
    /// The device could not run the challenge as sent.
    BadChallenge,
}

impl DeviceStatus {
    pub fn code(self) -> u8 {
        match self {
            DeviceStatus::Ok => 0,
            DeviceStatus::Interrupted => 1,
            DeviceStatus::NotRestored => 2,
            DeviceStatus::BadChallenge => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => DeviceStatus::Ok,
            1 => DeviceStatus::Interrupted,
            2 => DeviceStatus::NotRestored,
            3 => DeviceStatus::BadChallenge,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChallengeMessage {
    pub session_id: u64,
    pub r: Vec<u64>,
    pub x: u64,
    pub p: u64,
    pub perm_seed: u64,
    pub passes: u32,
    pub region_id: String,
}

impl ChallengeMessage {
    pub fn from_spec(session_id: u64, spec: &ChallengeSpec) -> Self {
        ChallengeMessage {
            session_id,
            r: spec.seeds.values().to_vec(),
            x: spec.params().x(),
            p: spec.params().p(),
            perm_seed: spec.perm_seed,
            passes: spec.passes,
            region_id: spec.region_id.clone(),
        }
    }

    /// Rebuilds the spec, re-checking every field invariant.
    pub fn to_spec(&self) -> Result<ChallengeSpec, ProtocolError> {
        let bad = |e: &dyn std::fmt::Display| ProtocolError::MalformedFrame(format!("invalid challenge: {e}"));
        let params = FieldParams::new(self.p, self.x).map_err(|e| bad(&e))?;
        let seeds = RandomSeeds::new(self.r.clone(), params).map_err(|e| bad(&e))?;
        ChallengeSpec::new(seeds, self.perm_seed, self.passes, self.region_id.clone()).map_err(|e| bad(&e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResponseMessage {
    pub session_id: u64,
    pub accumulator: u64,
    pub status: DeviceStatus,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Restore { session_id: u64 },
    Restored { session_id: u64 },
    Challenge(ChallengeMessage),
    Response(ResponseMessage),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Restore { .. } => "RESTORE",
            Message::Restored { .. } => "RESTORED",
            Message::Challenge(_) => "CHALLENGE",
            Message::Response(_) => "RESPONSE",
        }
    }

    pub fn session_id(&self) -> u64 {
        match self {
            Message::Restore { session_id } | Message::Restored { session_id } => *session_id,
            Message::Challenge(c) => c.session_id,
            Message::Response(r) => r.session_id,
        }
    }
}

fn payload(msg: &Message) -> Result<Vec<u8>, ProtocolError> {
    let mut out = Vec::with_capacity(64);
    match msg {
        Message::Restore { session_id } => {
            out.push(TYPE_RESTORE);
            out.extend_from_slice(&session_id.to_le_bytes());
        }
        Message::Restored { session_id } => {
            out.push(TYPE_RESTORED);
            out.extend_from_slice(&session_id.to_le_bytes());
        }
        Message::Challenge(c) => {
            let k = u16::try_from(c.r.len()).map_err(|_| ProtocolError::MalformedFrame("more than 65535 r values".into()))?;
            let region_len = u16::try_from(c.region_id.len())
                .map_err(|_| ProtocolError::MalformedFrame("region id longer than 65535 bytes".into()))?;
            out.push(TYPE_CHALLENGE);
            out.extend_from_slice(&c.session_id.to_le_bytes());
            out.extend_from_slice(&k.to_le_bytes());
            for r in &c.r {
                out.extend_from_slice(&r.to_le_bytes());
            }
            out.extend_from_slice(&c.x.to_le_bytes());
            out.extend_from_slice(&c.p.to_le_bytes());
            out.extend_from_slice(&c.perm_seed.to_le_bytes());
            out.extend_from_slice(&c.passes.to_le_bytes());
            out.extend_from_slice(&region_len.to_le_bytes());
            out.extend_from_slice(c.region_id.as_bytes());
        }
        Message::Response(r) => {
            out.push(TYPE_RESPONSE);
            out.extend_from_slice(&r.session_id.to_le_bytes());
            out.extend_from_slice(&r.accumulator.to_le_bytes());
            out.push(r.status.code());
        }
    }
    if out.len() > MAX_PAYLOAD {
        return Err(ProtocolError::MalformedFrame(format!("payload of {} bytes exceeds {MAX_PAYLOAD}", out.len())));
    }
    Ok(out)
}

pub fn encode(msg: &Message) -> Result<Vec<u8>, ProtocolError> {
    let body = payload(msg)?;
    let mut frame = Vec::with_capacity(HEADER_LEN + body.len() + CRC_LEN);
    frame.extend_from_slice(&FRAME_MAGIC);
    frame.extend_from_slice(&(body.len() as u32).to_le_bytes());
    frame.extend_from_slice(&body);
    let crc = crc32fast::hash(&frame);
    frame.extend_from_slice(&crc.to_le_bytes());
    Ok(frame)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| ProtocolError::MalformedFrame("payload truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ProtocolError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn parse_payload(body: &[u8]) -> Result<Message, ProtocolError> {
    let mut c = Cursor { buf: body, pos: 0 };
    let msg = match c.u8()? {
        TYPE_RESTORE => Message::Restore { session_id: c.u64()? },
        TYPE_RESTORED => Message::Restored { session_id: c.u64()? },
        TYPE_CHALLENGE => {
            let session_id = c.u64()?;
            let k = c.u16()? as usize;
            let r = (0..k).map(|_| c.u64()).collect::<Result<Vec<_>, _>>()?;
            let x = c.u64()?;
            let p = c.u64()?;
            let perm_seed = c.u64()?;
            let passes = c.u32()?;
            let region_len = c.u16()? as usize;
            let region_id = std::str::from_utf8(c.take(region_len)?)
                .map_err(|_| ProtocolError::MalformedFrame("region id is not utf-8".into()))?
                .to_string();
            Message::Challenge(ChallengeMessage { session_id, r, x, p, perm_seed, passes, region_id })
        }
        TYPE_RESPONSE => {
            let session_id = c.u64()?;
            let accumulator = c.u64()?;
            let code = c.u8()?;
            let status = DeviceStatus::from_code(code)
                .ok_or_else(|| ProtocolError::MalformedFrame(format!("unknown status {code}")))?;
            Message::Response(ResponseMessage { session_id, accumulator, status })
        }
        t => return Err(ProtocolError::MalformedFrame(format!("unknown message type {t:#04x}"))),
    };
    if c.pos != body.len() {
        return Err(ProtocolError::MalformedFrame(format!("{} trailing payload bytes", body.len() - c.pos)));
    }
    Ok(msg)
}

fn payload_len(header: &[u8]) -> Result<usize, ProtocolError> {
    if header[..4] != FRAME_MAGIC {
        return Err(ProtocolError::MalformedFrame("bad magic".into()));
    }
    let len = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    if len == 0 || len > MAX_PAYLOAD {
        return Err(ProtocolError::MalformedFrame(format!("payload length {len} out of range")));
    }
    Ok(len)
}

fn check_crc(frame: &[u8], crc_bytes: &[u8]) -> Result<(), ProtocolError> {
    let want = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc32fast::hash(frame) != want {
        return Err(ProtocolError::MalformedFrame("crc mismatch".into()));
    }
    Ok(())
}

/// Decodes the first frame in `bytes`, returning it and the bytes consumed.
pub fn decode(bytes: &[u8]) -> Result<(Message, usize), ProtocolError> {
    if bytes.len() < HEADER_LEN {
        return Err(ProtocolError::MalformedFrame("frame truncated".into()));
    }
    let len = payload_len(&bytes[..HEADER_LEN])?;
    let total = HEADER_LEN + len + CRC_LEN;
    if bytes.len() < total {
        return Err(ProtocolError::MalformedFrame("frame truncated".into()));
    }
    check_crc(&bytes[..HEADER_LEN + len], &bytes[HEADER_LEN + len..total])?;
    Ok((parse_payload(&bytes[HEADER_LEN..HEADER_LEN + len])?, total))
}

pub fn write_frame<W: Write + ?Sized>(w: &mut W, msg: &Message) -> Result<(), ProtocolError> {
    w.write_all(&encode(msg)?)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame whose first byte has already been consumed.
pub fn read_frame_after<R: Read + ?Sized>(first: u8, r: &mut R) -> Result<Message, ProtocolError> {
    let mut frame = vec![0u8; HEADER_LEN];
    frame[0] = first;
    r.read_exact(&mut frame[1..])?;
    let len = payload_len(&frame)?;
    frame.resize(HEADER_LEN + len + CRC_LEN, 0);
    r.read_exact(&mut frame[HEADER_LEN..])?;
    Ok(decode(&frame)?.0)
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> Result<Option<Message>, ProtocolError> {
    let mut first = [0u8; 1];
    loop {
        match r.read(&mut first) {
            Ok(0) => return Ok(None),
            Ok(_) => return read_frame_after(first[0], r).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
}
