use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use timecheck_cli::reproduce::{fig10, fig11, fig13, Table};
use timecheck_cli::{cmd_reproduce, ReproduceArgs};
use timecheck_core::challenge::{collision_probe, multipass, multipass_naive, ChallengeSpec, ProbeShape};
use timecheck_core::checkpoint::MemoryImage;
use timecheck_core::coefficients::RandomSeeds;
use timecheck_core::device::{run_trials, Scenario};
use timecheck_core::exec::{derive_seed, Execution};
use timecheck_core::field::{FieldParams, MERSENNE_61};
use timecheck_core::permutation::Permutation;
use timecheck_core::protocol::{
    ChallengeShape, DeviceEndpoint, HostileDevice, Hostility, LoopbackChannel, SimulatedDevice, Verifier,
    DEFAULT_JITTER_US,
};
use timecheck_core::stats::{calibrate, serial_correlation, BaselineProfile, Decision, Detector, RejectReason, RepeatPolicy};
use timecheck_validation::Report;

fn exec() -> Execution {
    Execution::default()
}

#[test]
fn criterion_01_streaming_matches_oracle() {
    let mut r = Report::new(1, "multipass equals multipass_naive");
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0001);
    let primes = [13, 1009, MERSENNE_61];
    let mut mismatches = 0;
    for i in 0..1000 {
        let p = primes[i % primes.len()];
        let k = rng.random_range(1..=4);
        let passes = rng.random_range(1..=4u32);
        let max_d = (64).min((p - 1) / passes as u64);
        let d = rng.random_range(1..=max_d) as usize;
        let image = MemoryImage::random(d, "acc", rng.random()).unwrap();
        let spec = ChallengeSpec::random(&mut rng, k, p, passes, "acc").unwrap();
        let perm = Permutation::new(d as u64, spec.perm_seed).unwrap();
        if multipass(&image, &spec, &perm).unwrap() != multipass_naive(&image, &spec, &perm).unwrap() {
            mismatches += 1;
        }
    }
    r.check(format!("mismatches={mismatches}/1000"), mismatches == 0);
    r.runtime(start.elapsed(), Duration::from_secs(10));
    r.finish();
}

#[test]
fn criterion_02_pairwise_independence() {
    let mut r = Report::new(2, "k-wise independence by enumeration");
    let start = Instant::now();
    let p = 17u64;
    let table: Vec<Vec<u64>> = (0..p * p)
        .map(|t| {
            let seeds = RandomSeeds::new(vec![t / p, t % p], FieldParams::new(p, 0).unwrap()).unwrap();
            (0..10).map(|i| seeds.coefficient_at(i).unwrap()).collect()
        })
        .collect();
    let mut non_uniform = 0;
    for i1 in 0..10 {
        for i2 in (0..10).filter(|&i2| i2 != i1) {
            let mut counts: HashMap<(u64, u64), u32> = HashMap::new();
            for row in &table {
                *counts.entry((row[i1], row[i2])).or_default() += 1;
            }
            if counts.len() as u64 != p * p || counts.values().any(|&c| c != 1) {
                non_uniform += 1;
            }
        }
    }
    r.check(format!("seed_tuples={} non_uniform_pairs={non_uniform}/90", table.len()), non_uniform == 0);
    r.runtime(start.elapsed(), Duration::from_secs(5));
    r.finish();
}

#[test]
fn criterion_03_collision_bound() {
    let mut r = Report::new(3, "collision rate at p=13, d=4");
    let start = Instant::now();
    let trials = 100_000u64;
    let rate = collision_probe(ProbeShape { k: 4, p: 13, words: 4, passes: 1 }, trials, 0xacce_0003, exec()).unwrap();
    let q = 1.0 / 12.0;
    let bound = q + 3.0 * (q * (1.0 - q) / trials as f64).sqrt();
    r.at_most("collision_rate", rate, bound);
    r.runtime(start.elapsed(), Duration::from_secs(30));
    r.finish();
}

#[test]
fn criterion_04_permutation_bijective() {
    let mut r = Report::new(4, "Feistel permutation is a bijection");
    let start = Instant::now();
    let sizes: Vec<u64> = (1..=1024).chain([4095, 4096, 24_576, 65_536]).collect();
    let mut duplicates = 0u64;
    let mut round_trip_failures = 0u64;
    for &n in &sizes {
        for seed in [0, 0x5eed, u64::MAX] {
            let perm = Permutation::new(n, seed).unwrap();
            let mut seen = vec![false; n as usize];
            for i in 0..n {
                let j = perm.get(i).unwrap();
                if std::mem::replace(&mut seen[j as usize], true) {
                    duplicates += 1;
                }
                if perm.invert(j).unwrap() != i {
                    round_trip_failures += 1;
                }
            }
        }
    }
    r.check(format!("domains={} duplicates={duplicates}", sizes.len() * 3), duplicates == 0);
    r.check(format!("round_trip_failures={round_trip_failures}"), round_trip_failures == 0);
    r.runtime(start.elapsed(), Duration::from_secs(60));
    r.finish();
}

#[test]
fn criterion_05_sram_swap_attacks() {
    let mut r = Report::new(5, "SRAM baseline vs DRAM/IOMEM swap");
    let c = fig10(0, 50, exec()).unwrap();
    for (name, want) in [("baseline", 9.591e6), ("dram", 9.594e6), ("iomem", 9.591e6)] {
        let s = c.summary(name).unwrap();
        r.within(&format!("{name}_mean_us"), s.mean_us, want, 0.01 * want);
    }
    for name in ["dram", "iomem"] {
        let s = c.summary(name).unwrap();
        r.below(&format!("{name}_t_p"), s.t_p_value.unwrap(), 1e-6);
        r.below(&format!("{name}_ks_p"), s.ks_p_value.unwrap(), 1e-3);
    }
    r.finish();
}

#[test]
fn criterion_06_detection_rates() {
    let mut r = Report::new(6, "per-point detector FPR/FNR over 20 seeds");
    let d = fig13(0, 20, 50, exec()).unwrap();
    for attack in ["dram", "iomem"] {
        for method in ["percentile", "zscore"] {
            let row = d.row(attack, method).unwrap();
            r.at_most(&format!("{attack}_{method}_fpr_pct"), row.fpr_pct, 0.0);
            r.at_most(&format!("{attack}_{method}_fnr_pct"), row.fnr_pct, 0.0);
        }
        let row = d.row(attack, "modified_z").unwrap();
        r.at_most(&format!("{attack}_modified_z_fnr_pct"), row.fnr_pct, 0.0);
    }
    let iomem = d.row("iomem", "modified_z").unwrap();
    r.within("iomem_modified_z_fpr_pct", iomem.fpr_pct, 9.0, 5.0);
    r.finish();
}

#[test]
fn criterion_07_full_memory_mmc() {
    let mut r = Report::new(7, "full-memory baseline vs MMC transfer");
    let c = fig11(0, 50, exec()).unwrap();
    let base = c.summary("baseline_full").unwrap();
    let mmc = c.summary("mmc_full").unwrap();
    r.within("baseline_mean_us", base.mean_us, 1731.895e6, 0.01 * 1731.895e6);
    r.within("mmc_mean_us", mmc.mean_us, 1735.465e6, 0.01 * 1735.465e6);
    r.below("t_p", mmc.t_p_value.unwrap(), 0.05);
    r.at_least("deviation_sigma", (mmc.mean_us - base.mean_us) / base.std_us, 100.0);
    r.finish();
}

#[test]
fn criterion_08_baseline_whiteness() {
    let mut r = Report::new(8, "baseline latency series is white");
    let seeds = 50u64;
    let mut white = 0;
    for seed in 0..seeds {
        let scenario = Scenario::sram_baseline(derive_seed(0xacce_0008, "whiteness", seed));
        assert!(scenario.noise.drift.is_none());
        let xs: Vec<f64> = run_trials(&scenario, 50, exec()).unwrap().iter().map(|m| m.duration_us as f64).collect();
        if serial_correlation(&xs, 10).unwrap().white {
            white += 1;
        }
    }
    r.at_least("white_fraction", white as f64 / seeds as f64, 0.9);
    r.finish();
}

fn shape_of(s: &Scenario) -> ChallengeShape {
    ChallengeShape { k: s.k, p: s.p, passes: s.passes, region_id: s.region_id.clone() }
}

/// Decisions from `sessions` independent attestations against one device.
fn attest_many<D: DeviceEndpoint>(
    device: D,
    golden: MemoryImage,
    shape: ChallengeShape,
    profile: &BaselineProfile,
    sessions: u64,
    seed: u64,
) -> BTreeMap<String, u32> {
    let mut channel = LoopbackChannel::jittered(device, DEFAULT_JITTER_US, derive_seed(seed, "jitter", 0));
    let mut tally = BTreeMap::new();
    for i in 0..sessions {
        let mut verifier = Verifier::new(golden.clone(), shape.clone(), derive_seed(seed, "verifier", i));
        let key = match verifier.attest(&mut channel, profile, &Detector::percentile(), &RepeatPolicy::default()) {
            Ok(d) => format!("{:?}", d.decision),
            Err(e) => format!("error({e})"),
        };
        *tally.entry(key).or_insert(0) += 1;
    }
    tally
}

#[test]
fn criterion_09_end_to_end_sessions() {
    let mut r = Report::new(9, "attestation over jittered loopback");
    let start = Instant::now();
    let sessions = 100;
    let clean = Scenario::sram_baseline(0xacce_0009);
    let samples: Vec<f64> = run_trials(&clean, 50, exec()).unwrap().iter().map(|m| m.duration_us as f64).collect();
    let profile = calibrate(&samples).unwrap();
    let accept = format!("{:?}", Decision::Accept);
    let timing = format!("{:?}", Decision::Reject(RejectReason::Timing));
    let mismatch = format!("{:?}", Decision::Reject(RejectReason::ValueMismatch));

    let cases: [(&str, Scenario, &String); 4] = [
        ("clean", clean.clone(), &accept),
        ("dram", Scenario { master_seed: clean.master_seed, ..Scenario::sram_dram_attack(0) }, &timing),
        ("iomem", Scenario { master_seed: clean.master_seed, ..Scenario::sram_iomem_attack(0) }, &timing),
        ("mmc", Scenario { master_seed: clean.master_seed, ..Scenario::sram_mmc_attack(0) }, &timing),
    ];
    for (i, (name, scenario, want)) in cases.into_iter().enumerate() {
        let dev = SimulatedDevice::new(scenario.clone()).unwrap();
        let golden = dev.checkpoint().scan_image();
        let tally = attest_many(dev, golden, shape_of(&scenario), &profile, sessions, i as u64);
        let hits = tally.get(want).copied().unwrap_or(0);
        r.check(format!("{name}: {want} {hits}/{sessions} {tally:?}"), hits as u64 == sessions);
    }

    let inner = SimulatedDevice::new(clean.clone()).unwrap();
    let golden = inner.checkpoint().scan_image();
    let stub = HostileDevice::new(inner, Hostility::WrongResult);
    let tally = attest_many(stub, golden, shape_of(&clean), &profile, sessions, 9);
    let hits = tally.get(&mismatch).copied().unwrap_or(0);
    r.check(format!("wrong_result: {mismatch} {hits}/{sessions} {tally:?}"), hits as u64 == sessions);

    r.runtime(start.elapsed(), Duration::from_secs(60));
    r.finish();
}

fn reproduce_into(dir: &Path, table: Table) -> BTreeMap<String, Vec<u8>> {
    let args = ReproduceArgs { table, seed: 7, seeds: 3, trials: 20, bins: 16, out: dir.to_path_buf(), sequential: false };
    let files = cmd_reproduce(&args, &mut std::io::sink()).unwrap();
    files
        .iter()
        .map(|f| (f.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(f).unwrap()))
        .collect()
}

#[test]
fn criterion_10_reproduce_is_deterministic() {
    let mut r = Report::new(10, "reproduce output is byte-identical across runs");
    for table in [Table::Fig10, Table::Fig11, Table::Fig13] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let first = reproduce_into(a.path(), table);
        let second = reproduce_into(b.path(), table);
        let bytes: usize = first.values().map(Vec::len).sum();
        r.check(format!("{table:?}: {} files, {bytes} bytes", first.len()), !first.is_empty() && first == second);
    }
    r.finish();
}
