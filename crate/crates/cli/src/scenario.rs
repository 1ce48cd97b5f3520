//! Building device scenarios from command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use timecheck_core::device::{
    full_memory_scenario, AdversaryConfig, FullMemoryConfig, NoiseDistribution, NoiseModel, Scenario,
    DRAM_ATTACK_SIGMA_US, FULL_MMC_SIGMA_US, IOMEM_ATTACK_SIGMA_US, MMC_PAYLOAD_BYTES, MMC_TRIGGER_INDEX,
};
use timecheck_core::stats::{BaselineProfile, Correlogram};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    /// On-chip SRAM, 500 passes.
    Sram,
    /// Whole memory, single pass.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attack {
    None,
    /// One word per pass swapped through DRAM.
    Dram,
    /// One word per pass swapped through I/O memory.
    Iomem,
    /// One 512-byte MMC transfer at scan index 100.
    Mmc,
    /// Honest timing, wrong accumulator.
    Corrupt,
}

impl Attack {
    pub fn name(self) -> &'static str {
        match self {
            Attack::None => "none",
            Attack::Dram => "dram",
            Attack::Iomem => "iomem",
            Attack::Mmc => "mmc",
            Attack::Corrupt => "corrupt",
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct ScenarioArgs {
    /// Scenario JSON file; replaces --region and --attack.
    #[arg(long, conflicts_with_all = ["region", "attack"])]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Region::Sram)]
    pub region: Region,
    #[arg(long, value_enum, default_value_t = Attack::None)]
    pub attack: Attack,
    /// Passes per challenge [default: 500 for sram, 1 for full].
    #[arg(long)]
    pub passes: Option<u32>,
    /// Master seed [default: 0, or the config file's].
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn base_scenario(region: Region, seed: u64) -> Scenario {
    match region {
        Region::Sram => Scenario::sram_baseline(seed),
        Region::Full => full_memory_scenario(&FullMemoryConfig { master_seed: seed, ..Default::default() }).baseline,
    }
}

fn with_sigma(noise: &NoiseModel, sigma_us: f64) -> NoiseModel {
    match noise.distribution {
        NoiseDistribution::Gaussian { .. } => {
            NoiseModel { distribution: NoiseDistribution::Gaussian { sigma_us }, ..noise.clone() }
        }
        _ => noise.clone(),
    }
}

/// The same device with `attack` active. Gaussian noise takes the spread
/// measured for that attack when one is known.
pub fn apply_attack(base: &Scenario, attack: Attack) -> Result<Scenario, CliError> {
    let full = base.region_id == "full";
    let (adversary, sigma) = match attack {
        Attack::None => return Ok(base.clone()),
        Attack::Dram | Attack::Iomem if full => {
            return Err(CliError::Usage(format!("the {} attack needs an on-chip region; full memory already lives in DRAM", attack.name())));
        }
        Attack::Dram => (AdversaryConfig::dram_swap(1), Some(DRAM_ATTACK_SIGMA_US)),
        Attack::Iomem => (AdversaryConfig::iomem_swap(1), Some(IOMEM_ATTACK_SIGMA_US)),
        Attack::Mmc => (AdversaryConfig::mmc_io(MMC_TRIGGER_INDEX, MMC_PAYLOAD_BYTES), full.then_some(FULL_MMC_SIGMA_US)),
        Attack::Corrupt => (AdversaryConfig::corrupting(), None),
    };
    let noise = sigma.map_or_else(|| base.noise.clone(), |s| with_sigma(&base.noise, s));
    let name = if full { format!("{}_full", attack.name()) } else { attack.name().to_string() };
    Ok(Scenario { name, adversary, noise, ..base.clone() })
}

impl ScenarioArgs {
    pub fn build(&self) -> Result<Scenario, CliError> {
        let mut s = match &self.config {
            Some(path) => Scenario::load(path)?,
            None => apply_attack(&base_scenario(self.region, self.seed.unwrap_or(0)), self.attack)?,
        };
        if let Some(seed) = self.seed {
            s.master_seed = seed;
        }
        if let Some(p) = self.passes {
            s.passes = p;
        }
        s.validate()?;
        Ok(s)
    }
}

/// Calibration output: the profile and the scenario it was measured on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub scenario: Scenario,
    pub trials: u32,
    pub profile: BaselineProfile,
    pub whiteness: Option<Correlogram>,
}

impl ProfileFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}
