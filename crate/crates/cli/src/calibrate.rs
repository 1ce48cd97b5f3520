use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use timecheck_core::device::{run_trials, Measurement};
use timecheck_core::stats::{calibrate, serial_correlation};

use crate::scenario::{ProfileFile, ScenarioArgs};
use crate::{create_file, exec_mode, write_json, CliError};

#[derive(Args, Clone, Debug)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 50)]
    pub trials: u32,
    /// Profile JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Measurement CSV [default: the profile path with a .csv extension].
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Highest lag checked for serial correlation.
    #[arg(long, default_value_t = 10)]
    pub max_lag: usize,
    /// Run trials on one thread.
    #[arg(long)]
    pub sequential: bool,
}

pub fn write_measurements(path: &std::path::Path, ms: &[Measurement]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    w.write_record(["scenario", "trial_id", "duration_us", "spec_digest", "interrupted"])?;
    for m in ms {
        w.write_record([
            m.scenario.clone(),
            m.trial_id.to_string(),
            m.duration_us.to_string(),
            m.spec_digest.clone(),
            m.interrupted.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    Ok(())
}

pub fn cmd_calibrate(args: &CalibrateArgs, out: &mut dyn Write) -> Result<ProfileFile, CliError> {
    let scenario = args.scenario.build()?;
    let ms = run_trials(&scenario, args.trials, exec_mode(args.sequential))?;
    let samples: Vec<f64> = ms.iter().map(|m| m.duration_us as f64).collect();
    let profile = calibrate(&samples)?;
    let lags = args.max_lag.min(samples.len() - 1);
    let whiteness = if lags == 0 { None } else { serial_correlation(&samples, lags).ok() };

    let file = ProfileFile { scenario, trials: args.trials, profile, whiteness };
    write_json(&args.out, &file)?;
    let csv_path = args.csv.clone().unwrap_or_else(|| args.out.with_extension("csv"));
    write_measurements(&csv_path, &ms)?;

    let p = &file.profile;
    let _ = writeln!(out, "profile: n={} mean={:.1}us std={:.1}us band=[{:.1}, {:.1}]us", p.n, p.mean, p.std, p.p2_5, p.p97_5);
    let _ = match &file.whiteness {
        Some(c) => writeln!(
            out,
            "whiteness: {} ({} of {} lags outside +-{:.3}, reject at {})",
            if c.white { "white" } else { "NOT white" },
            c.flagged_lags.len(),
            c.acf.len(),
            c.band,
            c.reject_at
        ),
        None => writeln!(out, "whiteness: not assessed (constant series)"),
    };
    Ok(file)
}
