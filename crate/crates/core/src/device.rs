//! Parametric timing model of the device under test.
//!
//! A simulated challenge always computes the honest accumulator (except for
//! the deliberately corrupting adversary); only its reported latency changes:
//!
//! ```text
//! duration = P*W*scan_cost + P*W*compute_cost + adversary_delay + noise
//! ```
//!
//! where `W` is the modeled word count. Swap adversaries pay two transfers
//! (evict and refill) of `words_per_pass` words on every pass; the MMC
//! adversary pays one payload transfer when the scan reaches its trigger.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::challenge::{multipass_seeded, ChallengeResult, ChallengeSpec};
use crate::checkpoint::{MemoryImage, REGISTER_WORDS};
use crate::error::DeviceError;
use crate::exec::{derive_seed, map_indexed, Execution};
use crate::field::MERSENNE_61;

/// Full-size SRAM word count: 192 KiB of 8-byte words plus 64 words of
/// register and program state.
pub const SRAM_MODELED_WORDS: u64 = 24_576 + 64;
/// 4 GiB of 8-byte words.
pub const FULL_MEMORY_MODELED_WORDS: u64 = 1 << 29;
pub const DEFAULT_PASSES: u32 = 500;
pub const DEFAULT_K: usize = 4;

pub const SRAM_BASELINE_MEAN_US: f64 = 9.591e6;
pub const SRAM_BASELINE_SIGMA_US: f64 = 185.0;
pub const DRAM_ATTACK_SIGMA_US: f64 = 130.0;
pub const IOMEM_ATTACK_SIGMA_US: f64 = 128.0;
pub const FULL_BASELINE_MEAN_US: f64 = 1_731.895e6;
pub const FULL_BASELINE_SIGMA_US: f64 = 16.543e3;
pub const FULL_MMC_SIGMA_US: f64 = 28.587e3;
pub const MMC_SHIFT_US: f64 = 1_735.465e6 - 1_731.895e6;
pub const MMC_PAYLOAD_BYTES: u64 = 512;
pub const MMC_TRIGGER_INDEX: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Sram,
    Dram,
    Iomem,
    Mmc,
}

impl Tier {
    pub fn name(self) -> &'static str {
        match self {
            Tier::Sram => "sram",
            Tier::Dram => "dram",
            Tier::Iomem => "iomem",
            Tier::Mmc => "mmc",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TierModel {
    pub tier: Tier,
    /// Microseconds per 8-byte access.
    pub per_word_cost_us: f64,
    /// Microseconds per swap transaction, independent of its size.
    pub per_op_fixed_cost_us: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TierTable {
    pub tiers: Vec<TierModel>,
}

impl TierTable {
    /// Costs solved from the reference aggregates: the scan tier is charged
    /// `baseline_mean / (passes * words)` per word, a DRAM swap costs 8 us
    /// per word and pass, an IOMEM swap 2 us, and a 512-byte MMC transfer
    /// adds the full-memory mean shift.
    pub fn calibrated(scan_tier: Tier, baseline_mean_us: f64, passes: u32, modeled_words: u64) -> Self {
        let scan_cost = baseline_mean_us / (passes as f64 * modeled_words as f64);
        let mut tiers = vec![
            TierModel { tier: Tier::Sram, per_word_cost_us: 0.5, per_op_fixed_cost_us: 0.0 },
            TierModel { tier: Tier::Dram, per_word_cost_us: 4.0, per_op_fixed_cost_us: 0.0 },
            TierModel { tier: Tier::Iomem, per_word_cost_us: 1.0, per_op_fixed_cost_us: 0.0 },
            TierModel {
                tier: Tier::Mmc,
                per_word_cost_us: MMC_SHIFT_US / (MMC_PAYLOAD_BYTES / 8) as f64,
                per_op_fixed_cost_us: 0.0,
            },
        ];
        for t in &mut tiers {
            if t.tier == scan_tier {
                t.per_word_cost_us = scan_cost;
            }
        }
        TierTable { tiers }
    }

    pub fn get(&self, tier: Tier) -> Result<&TierModel, DeviceError> {
        self.tiers
            .iter()
            .find(|t| t.tier == tier)
            .ok_or_else(|| DeviceError::UnknownTier(tier.name().to_string()))
    }

    /// Checks non-negative costs and the tier ordering
    /// `sram < dram`, `iomem < dram`, `dram < mmc` for whichever tiers exist.
    pub fn validate(&self) -> Result<(), DeviceError> {
        for t in &self.tiers {
            if !(t.per_word_cost_us >= 0.0 && t.per_op_fixed_cost_us >= 0.0) {
                return Err(DeviceError::InvalidConfig(format!("{} has a negative cost", t.tier.name())));
            }
        }
        let cost = |tier| self.get(tier).ok().map(|t| t.per_word_cost_us);
        let ordered = [(Tier::Sram, Tier::Dram), (Tier::Iomem, Tier::Dram), (Tier::Dram, Tier::Mmc)];
        for (fast, slow) in ordered {
            if let (Some(a), Some(b)) = (cost(fast), cost(slow)) {
                if a >= b {
                    return Err(DeviceError::InvalidConfig(format!(
                        "{} must be cheaper per word than {}",
                        fast.name(),
                        slow.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryKind {
    None,
    DramSwap,
    IomemSwap,
    MmcIo,
    /// Returns a wrong accumulator at no time cost; exercises the value check.
    Corrupting,
}

impl AdversaryKind {
    pub fn target_tier(self) -> Option<Tier> {
        match self {
            AdversaryKind::DramSwap => Some(Tier::Dram),
            AdversaryKind::IomemSwap => Some(Tier::Iomem),
            AdversaryKind::MmcIo => Some(Tier::Mmc),
            AdversaryKind::None | AdversaryKind::Corrupting => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub kind: AdversaryKind,
    /// Words swapped out and back in on every pass.
    pub words_per_pass: u64,
    /// Scan position at which the MMC adversary performs its transfer.
    pub trigger_index: u64,
    pub payload_bytes: u64,
}

impl AdversaryConfig {
    pub fn none() -> Self {
        AdversaryConfig { kind: AdversaryKind::None, words_per_pass: 0, trigger_index: 0, payload_bytes: 0 }
    }

    pub fn dram_swap(words_per_pass: u64) -> Self {
        AdversaryConfig { kind: AdversaryKind::DramSwap, words_per_pass, ..Self::none() }
    }

    pub fn iomem_swap(words_per_pass: u64) -> Self {
        AdversaryConfig { kind: AdversaryKind::IomemSwap, words_per_pass, ..Self::none() }
    }

    pub fn mmc_io(trigger_index: u64, payload_bytes: u64) -> Self {
        AdversaryConfig { kind: AdversaryKind::MmcIo, trigger_index, payload_bytes, ..Self::none() }
    }

    pub fn corrupting() -> Self {
        AdversaryConfig { kind: AdversaryKind::Corrupting, ..Self::none() }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        if matches!(self.kind, AdversaryKind::DramSwap | AdversaryKind::IomemSwap) && self.words_per_pass == 0 {
            return Err(DeviceError::InvalidConfig("swap adversaries move at least one word per pass".into()));
        }
        Ok(())
    }

    /// Extra latency for a scan of `passes` passes over `words` words.
    pub fn delay_us(&self, tiers: &TierTable, passes: u32, words: u64) -> Result<f64, DeviceError> {
        let Some(tier) = self.kind.target_tier() else {
            return Ok(0.0);
        };
        let target = tiers.get(tier)?;
        Ok(match self.kind {
            AdversaryKind::MmcIo => {
                if self.trigger_index >= passes as u64 * words {
                    0.0
                } else {
                    target.per_op_fixed_cost_us + self.payload_bytes.div_ceil(8) as f64 * target.per_word_cost_us
                }
            }
            _ => {
                let per_pass = 2.0 * (target.per_op_fixed_cost_us + self.words_per_pass as f64 * target.per_word_cost_us);
                passes as f64 * per_pass
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseDistribution {
    Gaussian { sigma_us: f64 },
    Uniform { half_width_us: f64 },
    /// Resamples recorded offsets, centred on their mean.
    Empirical { samples_us: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Drift {
    Linear { per_trial_us: f64 },
    Step { at_trial: u64, shift_us: f64 },
}

impl Drift {
    pub fn offset_us(&self, trial_id: u64) -> f64 {
        match *self {
            Drift::Linear { per_trial_us } => per_trial_us * trial_id as f64,
            Drift::Step { at_trial, shift_us } => {
                if trial_id >= at_trial {
                    shift_us
                } else {
                    0.0
                }
            }
        }
    }
}

/// Rare non-maskable interrupt that stalls the challenge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmiModel {
    pub probability: f64,
    pub spike_us: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub distribution: NoiseDistribution,
    #[serde(default)]
    pub drift: Option<Drift>,
    #[serde(default)]
    pub nmi: Option<NmiModel>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseDraw {
    pub offset_us: f64,
    pub interrupted: bool,
}

impl NoiseModel {
    pub fn gaussian(sigma_us: f64) -> Self {
        NoiseModel { distribution: NoiseDistribution::Gaussian { sigma_us }, drift: None, nmi: None }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let ok = match &self.distribution {
            NoiseDistribution::Gaussian { sigma_us } => *sigma_us >= 0.0,
            NoiseDistribution::Uniform { half_width_us } => *half_width_us >= 0.0,
            NoiseDistribution::Empirical { samples_us } => !samples_us.is_empty(),
        };
        let nmi_ok = self.nmi.is_none_or(|n| (0.0..=1.0).contains(&n.probability) && n.spike_us >= 0.0);
        if ok && nmi_ok {
            Ok(())
        } else {
            Err(DeviceError::InvalidConfig("invalid noise model".into()))
        }
    }

    /// Noise for one trial, drawn from a stream seeded only by `seed`.
    pub fn sample(&self, seed: u64, trial_id: u64) -> NoiseDraw {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = match &self.distribution {
            NoiseDistribution::Gaussian { sigma_us } => {
                if *sigma_us == 0.0 {
                    0.0
                } else {
                    Normal::new(0.0, *sigma_us).expect("validated sigma").sample(&mut rng)
                }
            }
            NoiseDistribution::Uniform { half_width_us } => {
                if *half_width_us == 0.0 {
                    0.0
                } else {
                    rng.random_range(-half_width_us..=*half_width_us)
                }
            }
            NoiseDistribution::Empirical { samples_us } => {
                let mean = samples_us.iter().sum::<f64>() / samples_us.len() as f64;
                samples_us[rng.random_range(0..samples_us.len())] - mean
            }
        };
        let drift = self.drift.map_or(0.0, |d| d.offset_us(trial_id));
        let (spike, interrupted) = match self.nmi {
            Some(n) if rng.random_bool(n.probability) => (n.spike_us, true),
            _ => (0.0, false),
        };
        NoiseDraw { offset_us: base + drift + spike, interrupted }
    }
}

/// One timed challenge as the verifier sees it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measurement {
    pub trial_id: u64,
    pub scenario: String,
    /// Whole microseconds, at least 1.
    pub duration_us: u64,
    pub spec_digest: String,
    /// The device saw a non-maskable interrupt during the scan.
    #[serde(default)]
    pub interrupted: bool,
}

/// Costs the device pays for an honest scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub tiers: TierTable,
    /// Tier the challenged region lives in.
    pub scan_tier: Tier,
    #[serde(default)]
    pub compute_cost_per_word_us: f64,
    /// Word count charged by the timing model. Lets a small desk-scale image
    /// stand in for a full-size region; defaults to the scanned length.
    #[serde(default)]
    pub modeled_words: Option<u64>,
}

impl DeviceModel {
    pub fn charged_words(&self, scanned: u64) -> u64 {
        self.modeled_words.unwrap_or(scanned)
    }

    /// Noise-free, adversary-free latency.
    pub fn baseline_cost_us(&self, passes: u32, scanned: u64) -> Result<f64, DeviceError> {
        let words = passes as f64 * self.charged_words(scanned) as f64;
        Ok(words * (self.tiers.get(self.scan_tier)?.per_word_cost_us + self.compute_cost_per_word_us))
    }
}

/// Runs the challenge on `image` and reports its simulated latency.
#[allow(clippy::too_many_arguments)]
pub fn simulate_challenge(
    image: &MemoryImage,
    spec: &ChallengeSpec,
    model: &DeviceModel,
    adversary: &AdversaryConfig,
    noise: &NoiseModel,
    scenario: &str,
    trial_id: u64,
    noise_seed: u64,
) -> Result<(ChallengeResult, Measurement), DeviceError> {
    adversary.validate()?;
    let mut result = multipass_seeded(image, spec)?;
    let scanned = image.word_count() as u64;
    let charged = model.charged_words(scanned);
    let base = model.baseline_cost_us(spec.passes, scanned)?;
    let attack = adversary.delay_us(&model.tiers, spec.passes, charged)?;
    if adversary.kind == AdversaryKind::Corrupting {
        result.accumulator = (result.accumulator + 1) % spec.params().p();
    }
    let draw = noise.sample(noise_seed, trial_id);
    let duration = (base + attack + draw.offset_us).round().max(1.0) as u64;
    let measurement = Measurement {
        trial_id,
        scenario: scenario.to_string(),
        duration_us: duration,
        spec_digest: result.spec_digest.clone(),
        interrupted: draw.interrupted,
    };
    Ok((result, measurement))
}

/// Complete description of a simulated experiment; the JSON scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub region_id: String,
    /// Words of simulated memory actually scanned, before the register file.
    pub image_words: usize,
    #[serde(default = "default_register_words")]
    pub register_words: usize,
    pub passes: u32,
    pub k: usize,
    pub p: u64,
    pub model: DeviceModel,
    pub adversary: AdversaryConfig,
    pub noise: NoiseModel,
    pub trials: u32,
    pub master_seed: u64,
    #[serde(default = "default_true")]
    pub quiesced: bool,
}

fn default_register_words() -> usize {
    REGISTER_WORDS
}

fn default_true() -> bool {
    true
}

/// Desk-scale SRAM image: 222 words plus the 34-word register file gives a
/// 256-word scan standing in for the 24 640 modeled words.
const DESK_SRAM_IMAGE_WORDS: usize = 222;
const DESK_FULL_IMAGE_WORDS: usize = 990;

impl Scenario {
    /// Clean SRAM scenario calibrated to the reference baseline.
    pub fn sram_baseline(master_seed: u64) -> Self {
        Scenario {
            name: "baseline".into(),
            region_id: "sram".into(),
            image_words: DESK_SRAM_IMAGE_WORDS,
            register_words: REGISTER_WORDS,
            passes: DEFAULT_PASSES,
            k: DEFAULT_K,
            p: MERSENNE_61,
            model: DeviceModel {
                tiers: TierTable::calibrated(Tier::Sram, SRAM_BASELINE_MEAN_US, DEFAULT_PASSES, SRAM_MODELED_WORDS),
                scan_tier: Tier::Sram,
                compute_cost_per_word_us: 0.0,
                modeled_words: Some(SRAM_MODELED_WORDS),
            },
            adversary: AdversaryConfig::none(),
            noise: NoiseModel::gaussian(SRAM_BASELINE_SIGMA_US),
            trials: 50,
            master_seed,
            quiesced: true,
        }
    }

    /// Same device with one word per pass swapped through DRAM.
    pub fn sram_dram_attack(master_seed: u64) -> Self {
        Scenario {
            name: "dram".into(),
            adversary: AdversaryConfig::dram_swap(1),
            noise: NoiseModel::gaussian(DRAM_ATTACK_SIGMA_US),
            ..Self::sram_baseline(master_seed)
        }
    }

    /// One word per pass swapped through memory-mapped I/O space.
    pub fn sram_iomem_attack(master_seed: u64) -> Self {
        Scenario {
            name: "iomem".into(),
            adversary: AdversaryConfig::iomem_swap(1),
            noise: NoiseModel::gaussian(IOMEM_ATTACK_SIGMA_US),
            ..Self::sram_baseline(master_seed)
        }
    }

    /// A single 512-byte MMC transfer at scan index 100.
    pub fn sram_mmc_attack(master_seed: u64) -> Self {
        Scenario {
            name: "mmc".into(),
            adversary: AdversaryConfig::mmc_io(MMC_TRIGGER_INDEX, MMC_PAYLOAD_BYTES),
            ..Self::sram_baseline(master_seed)
        }
    }

    pub fn with_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    pub fn scanned_words(&self) -> usize {
        self.image_words + self.register_words
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        if self.image_words == 0 {
            return Err(DeviceError::InvalidConfig("image_words must be positive".into()));
        }
        if self.k == 0 || self.passes == 0 {
            return Err(DeviceError::InvalidConfig("k and passes must be positive".into()));
        }
        self.model.tiers.validate()?;
        self.model.tiers.get(self.model.scan_tier)?;
        if let Some(t) = self.adversary.kind.target_tier() {
            self.model.tiers.get(t)?;
        }
        self.adversary.validate()?;
        self.noise.validate()
    }

    /// The checkpointed memory: image words followed by the register file,
    /// both derived from the master seed.
    pub fn scan_image(&self) -> Result<MemoryImage, DeviceError> {
        let image = MemoryImage::random(self.image_words, self.region_id.clone(), derive_seed(self.master_seed, "image", 0))?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.master_seed, "registers", 0));
        let registers: Vec<u64> = (0..self.register_words).map(|_| rng.random()).collect();
        Ok(image.with_registers(&registers))
    }

    /// Fresh challenge randomness for one session.
    pub fn challenge_for(&self, trial_id: u64) -> Result<ChallengeSpec, DeviceError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.master_seed, "challenge", trial_id));
        Ok(ChallengeSpec::random(&mut rng, self.k, self.p, self.passes, self.region_id.clone())?)
    }

    pub fn noise_seed(&self, trial_id: u64) -> u64 {
        derive_seed(self.master_seed, "noise", trial_id)
    }

    /// Simulates one trial against `image`.
    pub fn run_trial_on(&self, image: &MemoryImage, trial_id: u64) -> Result<(ChallengeResult, Measurement), DeviceError> {
        let spec = self.challenge_for(trial_id)?;
        simulate_challenge(
            image,
            &spec,
            &self.model,
            &self.adversary,
            &self.noise,
            &self.name,
            trial_id,
            self.noise_seed(trial_id),
        )
    }

    pub fn load(path: &Path) -> Result<Self, DeviceError> {
        let text = std::fs::read_to_string(path).map_err(|e| DeviceError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let s: Scenario = serde_json::from_str(&text).map_err(|e| DeviceError::InvalidConfig(format!("{}: {e}", path.display())))?;
        s.validate()?;
        Ok(s)
    }
}

/// `n_trials` independent sessions, each with fresh challenge randomness and
/// fresh noise. Trial seeds depend only on the trial index, so the output is
/// the same in either execution mode.
pub fn run_trials(scenario: &Scenario, n_trials: u32, exec: Execution) -> Result<Vec<Measurement>, DeviceError> {
    scenario.validate()?;
    let image = scenario.scan_image()?;
    map_indexed(exec, n_trials as u64, |t| scenario.run_trial_on(&image, t).map(|(_, m)| m))
        .into_iter()
        .collect()
}

/// Baseline and MMC scenarios for a whole-memory scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullMemoryScenario {
    pub baseline: Scenario,
    pub mmc: Scenario,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullMemoryConfig {
    pub baseline_mean_us: f64,
    pub baseline_sigma_us: f64,
    pub mmc_sigma_us: f64,
    pub modeled_words: u64,
    pub image_words: usize,
    pub passes: u32,
    pub master_seed: u64,
}

impl Default for FullMemoryConfig {
    fn default() -> Self {
        FullMemoryConfig {
            baseline_mean_us: FULL_BASELINE_MEAN_US,
            baseline_sigma_us: FULL_BASELINE_SIGMA_US,
            mmc_sigma_us: FULL_MMC_SIGMA_US,
            modeled_words: FULL_MEMORY_MODELED_WORDS,
            image_words: DESK_FULL_IMAGE_WORDS,
            passes: 1,
            master_seed: 0,
        }
    }
}

pub fn full_memory_scenario(config: &FullMemoryConfig) -> FullMemoryScenario {
    let baseline = Scenario {
        name: "baseline_full".into(),
        region_id: "full".into(),
        image_words: config.image_words,
        register_words: REGISTER_WORDS,
        passes: config.passes,
        k: DEFAULT_K,
        p: MERSENNE_61,
        model: DeviceModel {
            tiers: TierTable::calibrated(Tier::Dram, config.baseline_mean_us, config.passes, config.modeled_words),
            scan_tier: Tier::Dram,
            compute_cost_per_word_us: 0.0,
            modeled_words: Some(config.modeled_words),
        },
        adversary: AdversaryConfig::none(),
        noise: NoiseModel::gaussian(config.baseline_sigma_us),
        trials: 50,
        master_seed: config.master_seed,
        quiesced: true,
    };
    let mmc = Scenario {
        name: "mmc_full".into(),
        adversary: AdversaryConfig::mmc_io(MMC_TRIGGER_INDEX, MMC_PAYLOAD_BYTES),
        noise: NoiseModel::gaussian(config.mmc_sigma_us),
        ..baseline.clone()
    };
    FullMemoryScenario { baseline, mmc }
}
