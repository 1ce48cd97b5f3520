//! Reproduction reports for the evaluation tables, as CSV.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use timecheck_core::device::{full_memory_scenario, run_trials, FullMemoryConfig, Measurement, Scenario};
use timecheck_core::exec::{derive_seed, map_indexed, Execution};
use timecheck_core::stats::{
    calibrate, confusion_report, histogram, ks_test, t_test, BaselinePoints, ConfusionRow, Detector,
};

use crate::calibrate::write_measurements;
use crate::{create_file, exec_mode, CliError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Table {
    /// SRAM baseline against DRAM and IOMEM swap attacks.
    Fig10,
    /// Full-memory baseline against a single MMC transfer.
    Fig11,
    /// Per-point detector false positive and false negative rates.
    Fig13,
}

impl Table {
    fn name(self) -> &'static str {
        match self {
            Table::Fig10 => "fig10",
            Table::Fig11 => "fig11",
            Table::Fig13 => "fig13",
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub table: Table,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent master seeds aggregated by fig13.
    #[arg(long, default_value_t = 20)]
    pub seeds: u32,
    /// Trials per scenario.
    #[arg(long, default_value_t = 50)]
    pub trials: u32,
    /// Histogram bins.
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub sequential: bool,
}

/// One row of a fig10/fig11 summary. Test columns compare against the
/// first (baseline) scenario and are empty on the baseline row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub n: usize,
    pub mean_us: f64,
    pub std_us: f64,
    pub median_us: f64,
    pub mad_us: f64,
    pub p2_5_us: f64,
    pub p97_5_us: f64,
    /// Mean shift in baseline standard deviations.
    pub shift_sigma: Option<f64>,
    pub t_statistic: Option<f64>,
    pub t_p_value: Option<f64>,
    pub ks_statistic: Option<f64>,
    pub ks_p_value: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub summaries: Vec<ScenarioSummary>,
    pub measurements: Vec<Measurement>,
}

impl Comparison {
    pub fn summary(&self, scenario: &str) -> Option<&ScenarioSummary> {
        self.summaries.iter().find(|s| s.scenario == scenario)
    }

    pub fn durations(&self, scenario: &str) -> Vec<f64> {
        self.measurements.iter().filter(|m| m.scenario == scenario).map(|m| m.duration_us as f64).collect()
    }
}

fn compare(scenarios: &[Scenario], trials: u32, exec: Execution) -> Result<Comparison, CliError> {
    let mut measurements = Vec::new();
    let mut groups = Vec::new();
    for s in scenarios {
        let ms = run_trials(s, trials, exec)?;
        groups.push((s.name.clone(), ms.iter().map(|m| m.duration_us as f64).collect::<Vec<_>>()));
        measurements.extend(ms);
    }
    let base = calibrate(&groups[0].1)?;
    let mut summaries = Vec::new();
    for (i, (name, xs)) in groups.iter().enumerate() {
        let p = calibrate(xs)?;
        let (shift, t, ks) = if i == 0 {
            (None, None, None)
        } else {
            (Some((p.mean - base.mean) / base.std), Some(t_test(xs, &groups[0].1)?), Some(ks_test(xs, &groups[0].1)?))
        };
        summaries.push(ScenarioSummary {
            scenario: name.clone(),
            n: p.n,
            mean_us: p.mean,
            std_us: p.std,
            median_us: p.median,
            mad_us: p.mad,
            p2_5_us: p.p2_5,
            p97_5_us: p.p97_5,
            shift_sigma: shift,
            t_statistic: t.map(|r| r.statistic),
            t_p_value: t.map(|r| r.p_value),
            ks_statistic: ks.map(|r| r.statistic),
            ks_p_value: ks.map(|r| r.p_value),
        });
    }
    Ok(Comparison { summaries, measurements })
}

/// SRAM baseline, DRAM swap and IOMEM swap, each on its own sub-seed.
pub fn fig10(seed: u64, trials: u32, exec: Execution) -> Result<Comparison, CliError> {
    let scenarios = [
        Scenario::sram_baseline(derive_seed(seed, "fig10", 0)),
        Scenario::sram_dram_attack(derive_seed(seed, "fig10", 1)),
        Scenario::sram_iomem_attack(derive_seed(seed, "fig10", 2)),
    ];
    compare(&scenarios, trials, exec)
}

pub fn fig11(seed: u64, trials: u32, exec: Execution) -> Result<Comparison, CliError> {
    let base = full_memory_scenario(&FullMemoryConfig { master_seed: derive_seed(seed, "fig11", 0), ..Default::default() });
    let mmc = full_memory_scenario(&FullMemoryConfig { master_seed: derive_seed(seed, "fig11", 1), ..Default::default() });
    compare(&[base.baseline, mmc.mmc], trials, exec)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionRow {
    pub attack: String,
    pub method: String,
    pub threshold: f64,
    pub false_positives: usize,
    pub baseline_n: usize,
    pub fpr_pct: f64,
    pub false_negatives: usize,
    pub attack_n: usize,
    pub fnr_pct: f64,
}

impl DetectionRow {
    fn new(attack: &str, row: &ConfusionRow) -> Self {
        DetectionRow {
            attack: attack.into(),
            method: row.method.name().into(),
            threshold: row.threshold,
            false_positives: row.false_positives,
            baseline_n: row.baseline_n,
            fpr_pct: 100.0 * row.fpr(),
            false_negatives: row.false_negatives,
            attack_n: row.attack_n,
            fnr_pct: 100.0 * row.fnr(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedRow {
    pub seed_index: u32,
    pub attack: String,
    pub method: String,
    pub fpr_pct: f64,
    pub fnr_pct: f64,
}

#[derive(Clone, Debug)]
pub struct Detection {
    pub aggregate: Vec<DetectionRow>,
    pub per_seed: Vec<SeedRow>,
}

impl Detection {
    pub fn row(&self, attack: &str, method: &str) -> Option<&DetectionRow> {
        self.aggregate.iter().find(|r| r.attack == attack && r.method == method)
    }
}

pub fn detectors() -> [Detector; 4] {
    [Detector::percentile(), Detector::zscore(), Detector::modified_z(), Detector::chebyshev()]
}

/// For every master seed and attack: a fresh 50-trial baseline whose own
/// points are judged leave-one-out, and an attack run judged against the
/// full baseline. Counts are pooled over seeds.
pub fn fig13(seed: u64, seeds: u32, trials: u32, exec: Execution) -> Result<Detection, CliError> {
    type Attack = (&'static str, fn(u64) -> Scenario);
    let attacks: [Attack; 2] = [("dram", Scenario::sram_dram_attack), ("iomem", Scenario::sram_iomem_attack)];
    let per_seed: Vec<Vec<(usize, ConfusionRow)>> = map_indexed(exec, seeds as u64, |i| {
        let s = derive_seed(seed, "fig13", i);
        let mut rows = Vec::new();
        for (a, (name, make)) in attacks.iter().enumerate() {
            let base = Scenario::sram_baseline(derive_seed(s, "baseline", a as u64));
            let atk = make(derive_seed(s, name, 0));
            let xs: Vec<f64> =
                run_trials(&base, trials, Execution::Sequential)?.iter().map(|m| m.duration_us as f64).collect();
            let ys: Vec<f64> =
                run_trials(&atk, trials, Execution::Sequential)?.iter().map(|m| m.duration_us as f64).collect();
            let profile = calibrate(&xs)?;
            for row in confusion_report(&profile, BaselinePoints::LeaveOneOut, &ys, &detectors())? {
                rows.push((a, row));
            }
        }
        Ok::<_, CliError>(rows)
    })
    .into_iter()
    .collect::<Result<_, _>>()?;

    let mut pooled: Vec<(usize, ConfusionRow)> = Vec::new();
    let mut seed_rows = Vec::new();
    for (i, rows) in per_seed.iter().enumerate() {
        for (a, row) in rows {
            seed_rows.push(SeedRow {
                seed_index: i as u32,
                attack: attacks[*a].0.into(),
                method: row.method.name().into(),
                fpr_pct: 100.0 * row.fpr(),
                fnr_pct: 100.0 * row.fnr(),
            });
            match pooled.iter_mut().find(|(pa, pr)| pa == a && pr.method == row.method) {
                Some((_, acc)) => acc.merge(row),
                None => pooled.push((*a, row.clone())),
            }
        }
    }
    Ok(Detection {
        aggregate: pooled.iter().map(|(a, r)| DetectionRow::new(attacks[*a].0, r)).collect(),
        per_seed: seed_rows,
    })
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    Ok(())
}

fn write_histogram(path: &Path, c: &Comparison, bins: usize) -> Result<(), CliError> {
    let names: Vec<&str> = c.summaries.iter().map(|s| s.scenario.as_str()).collect();
    let all: Vec<f64> = c.measurements.iter().map(|m| m.duration_us as f64).collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hi = if hi > lo { hi } else { lo + 1.0 };
    let counts: Vec<Vec<usize>> = names.iter().map(|n| histogram(&c.durations(n), lo, hi, bins)).collect();
    let mut w = csv::Writer::from_writer(create_file(path)?);
    let mut header = vec!["bin_lo_us".to_string(), "bin_hi_us".to_string()];
    header.extend(names.iter().map(|n| format!("{n}_count")));
    w.write_record(&header)?;
    let width = (hi - lo) / bins as f64;
    for b in 0..bins {
        let mut rec = vec![(lo + b as f64 * width).to_string(), (lo + (b + 1) as f64 * width).to_string()];
        rec.extend(counts.iter().map(|c| c[b].to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    Ok(())
}

fn write_comparison(dir: &Path, table: &str, c: &Comparison, bins: usize) -> Result<Vec<PathBuf>, CliError> {
    let files = [
        dir.join(format!("{table}_summary.csv")),
        dir.join(format!("{table}_measurements.csv")),
        dir.join(format!("{table}_histogram.csv")),
    ];
    write_rows(&files[0], &c.summaries)?;
    write_measurements(&files[1], &c.measurements)?;
    write_histogram(&files[2], c, bins.max(1))?;
    Ok(files.to_vec())
}

/// Writes the table's CSVs into `args.out` and returns their paths.
pub fn cmd_reproduce(args: &ReproduceArgs, out: &mut dyn Write) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Io(args.out.clone(), e))?;
    let exec = exec_mode(args.sequential);
    let table = args.table.name();
    let files = match args.table {
        Table::Fig10 | Table::Fig11 => {
            let c = if args.table == Table::Fig10 {
                fig10(args.seed, args.trials, exec)?
            } else {
                fig11(args.seed, args.trials, exec)?
            };
            for s in &c.summaries {
                let _ = writeln!(
                    out,
                    "{table} {:<12} mean={:.6e}us std={:.1}us t_p={} ks_p={}",
                    s.scenario,
                    s.mean_us,
                    s.std_us,
                    s.t_p_value.map_or("-".into(), |p| format!("{p:.3e}")),
                    s.ks_p_value.map_or("-".into(), |p| format!("{p:.3e}")),
                );
            }
            write_comparison(&args.out, table, &c, args.bins)?
        }
        Table::Fig13 => {
            let d = fig13(args.seed, args.seeds, args.trials, exec)?;
            for r in &d.aggregate {
                let _ = writeln!(out, "fig13 {:<6} {:<11} FPR={:5.1}% FNR={:5.1}%", r.attack, r.method, r.fpr_pct, r.fnr_pct);
            }
            let files = vec![args.out.join("fig13_detection.csv"), args.out.join("fig13_per_seed.csv")];
            write_rows(&files[0], &d.aggregate)?;
            write_rows(&files[1], &d.per_seed)?;
            files
        }
    };
    Ok(files)
}
