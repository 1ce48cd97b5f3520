//! Memory images, checkpoints, and the record/replay cycle.
//!
//! Binary checkpoint layout (all little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "TCCK"
//! 4       4     format_version (u32)
//! 8       8     word count d (u64)
//! 16      4     register count (u32)
//! 20      8*d   image words
//! ..      8*r   register words
//! ```
//!
//! Region label and creation time live in a JSON sidecar next to the binary
//! file (`<path>.json`).

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CheckpointError;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TCCK";
pub const FORMAT_VERSION: u32 = 1;
/// 31 general-purpose registers plus 3 control-register placeholders.
pub const REGISTER_WORDS: usize = 34;
const HEADER_LEN: usize = 20;

/// The word array a challenge scans, labelled with the region it came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryImage {
    words: Vec<u64>,
    region_id: String,
}

impl MemoryImage {
    pub fn new(words: Vec<u64>, region_id: impl Into<String>) -> Result<Self, CheckpointError> {
        if words.is_empty() {
            return Err(CheckpointError::EmptyImage);
        }
        Ok(MemoryImage { words, region_id: region_id.into() })
    }

    /// Deterministic pseudorandom contents, handy for simulations.
    pub fn random(word_count: usize, region_id: impl Into<String>, seed: u64) -> Result<Self, CheckpointError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new((0..word_count).map(|_| rng.next_u64()).collect(), region_id)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn words_mut(&mut self) -> &mut [u64] {
        &mut self.words
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn region_id(&self) -> &str {
        &self.region_id
    }

    /// The image followed by `registers`: the word sequence a challenge
    /// actually scans when the register file is included.
    pub fn with_registers(&self, registers: &[u64]) -> MemoryImage {
        let mut words = Vec::with_capacity(self.words.len() + registers.len());
        words.extend_from_slice(&self.words);
        words.extend_from_slice(registers);
        MemoryImage { words, region_id: self.region_id.clone() }
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.words.iter().flat_map(|w| w.to_le_bytes()).collect()
    }
}

/// Live, mutable state of a simulated device.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeviceState {
    pub image: MemoryImage,
    pub registers: Vec<u64>,
    /// Caches, peripheral buffers and other volatile state that replay clears.
    pub volatile: Vec<u64>,
    /// Data an adversary parked in unchecked storage; replay cannot reach it.
    pub residue: Vec<u64>,
    /// False while DMA-capable peripherals or other interference sources are active.
    pub quiesced: bool,
}

impl DeviceState {
    pub fn new(image: MemoryImage, registers: Vec<u64>) -> Self {
        DeviceState { image, registers, volatile: vec![0; 16], residue: Vec::new(), quiesced: true }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    image: MemoryImage,
    register_file: Vec<u64>,
    /// Seconds since the Unix epoch.
    created_at: u64,
    format_version: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub region_id: String,
    pub created_at: u64,
    pub format_version: u32,
    pub word_count: u64,
    pub register_count: u32,
}

/// Deep copy of the device's image and register file.
pub fn checkpoint_record(state: &DeviceState) -> Result<Checkpoint, CheckpointError> {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    checkpoint_record_at(state, now)
}

pub fn checkpoint_record_at(state: &DeviceState, created_at: u64) -> Result<Checkpoint, CheckpointError> {
    if !state.quiesced {
        return Err(CheckpointError::NotQuiesced);
    }
    Ok(Checkpoint {
        image: state.image.clone(),
        register_file: state.registers.clone(),
        created_at,
        format_version: FORMAT_VERSION,
    })
}

/// Restores image and registers bit-exactly and clears volatile state.
/// Adversary residue in unchecked storage is out of reach and survives.
pub fn checkpoint_replay(cp: &Checkpoint, state: &mut DeviceState) -> Result<(), CheckpointError> {
    if cp.format_version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch { found: cp.format_version, supported: FORMAT_VERSION });
    }
    if state.image.word_count() != cp.image.word_count() {
        return Err(CheckpointError::SizeMismatch {
            live: state.image.word_count(),
            recorded: cp.image.word_count(),
        });
    }
    state.image.words.copy_from_slice(&cp.image.words);
    state.image.region_id.clone_from(&cp.image.region_id);
    state.registers.clone_from(&cp.register_file);
    state.volatile.fill(0);
    Ok(())
}

impl Checkpoint {
    pub fn image(&self) -> &MemoryImage {
        &self.image
    }

    pub fn register_file(&self) -> &[u64] {
        &self.register_file
    }

    pub fn created_at(&self) -> u64 {
        self.created_at
    }

    pub fn format_version(&self) -> u32 {
        self.format_version
    }

    /// Words a challenge scans: image then register file.
    pub fn scan_image(&self) -> MemoryImage {
        self.image.with_registers(&self.register_file)
    }

    pub fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            region_id: self.image.region_id.clone(),
            created_at: self.created_at,
            format_version: self.format_version,
            word_count: self.image.word_count() as u64,
            register_count: self.register_file.len() as u32,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let d = self.image.word_count();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * (d + self.register_file.len()));
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        out.extend_from_slice(&(d as u64).to_le_bytes());
        out.extend_from_slice(&(self.register_file.len() as u32).to_le_bytes());
        for w in self.image.words.iter().chain(&self.register_file) {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    /// Parses the binary form. Region and timestamp come from the sidecar, so
    /// they default to `"unknown"` and 0 here.
    pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
        if bytes.len() < HEADER_LEN {
            return Err(CheckpointError::Truncated { expected: HEADER_LEN, found: bytes.len() });
        }
        if bytes[..4] != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(CheckpointError::VersionMismatch { found: version, supported: FORMAT_VERSION });
        }
        let d = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let regs = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
        let expected = d
            .checked_add(regs)
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .unwrap_or(usize::MAX);
        if bytes.len() != expected {
            return Err(CheckpointError::Truncated { expected, found: bytes.len() });
        }
        let mut words = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()));
        let image_words: Vec<u64> = words.by_ref().take(d).collect();
        let register_file: Vec<u64> = words.collect();
        Ok(Checkpoint {
            image: MemoryImage::new(image_words, "unknown")?,
            register_file,
            created_at: 0,
            format_version: version,
        })
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Writes the binary checkpoint and its JSON sidecar.
    pub fn write(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.encode())?;
        fs::write(Self::sidecar_path(path), serde_json::to_vec_pretty(&self.meta())?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Checkpoint, CheckpointError> {
        let mut cp = Self::decode(&fs::read(path)?)?;
        let sidecar = Self::sidecar_path(path);
        if sidecar.exists() {
            let meta: CheckpointMeta = serde_json::from_slice(&fs::read(sidecar)?)?;
            cp.image.region_id = meta.region_id;
            cp.created_at = meta.created_at;
        }
        Ok(cp)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyConfig {
    pub block_bytes: usize,
    /// Blocks below this many bits/byte count as low-entropy.
    pub threshold_bits: f64,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        EntropyConfig { block_bytes: 4096, threshold_bits: 4.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// Shannon entropy of each block's byte histogram, bits per byte.
    pub block_bits: Vec<f64>,
    pub low_fraction: f64,
    pub threshold_bits: f64,
}

fn shannon_bits(block: &[u8]) -> f64 {
    let mut hist = [0usize; 256];
    for &b in block {
        hist[b as usize] += 1;
    }
    let n = block.len() as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / n;
            -q * q.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

/// Per-block byte entropy of the image; the last block may be partial.
pub fn entropy_report(image: &MemoryImage, config: &EntropyConfig) -> EntropyReport {
    let bytes = image.to_le_bytes();
    let block_bits: Vec<f64> = bytes.chunks(config.block_bytes.max(1)).map(shannon_bits).collect();
    let low = block_bits.iter().filter(|&&h| h < config.threshold_bits).count();
    EntropyReport {
        low_fraction: low as f64 / block_bits.len() as f64,
        block_bits,
        threshold_bits: config.threshold_bits,
    }
}

/// Overwrites the given word ranges with seeded pseudorandom data.
pub fn fill_slack(image: &MemoryImage, ranges: &[Range<usize>], seed: u64) -> Result<MemoryImage, CheckpointError> {
    let len = image.word_count();
    let mut sorted: Vec<Range<usize>> = ranges.to_vec();
    sorted.sort_by_key(|r| (r.start, r.end));
    let mut prev_end = 0;
    for (i, r) in sorted.iter().enumerate() {
        if r.start > r.end || r.end > len {
            return Err(CheckpointError::RangeOutOfBounds { start: r.start, end: r.end, len });
        }
        if i > 0 && r.start < prev_end {
            return Err(CheckpointError::RangeOverlap(r.start));
        }
        prev_end = r.end;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = image.clone();
    for r in sorted {
        for w in &mut out.words[r] {
            *w = rng.next_u64();
        }
    }
    Ok(out)
}
