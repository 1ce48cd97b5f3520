use proptest::prelude::*;
use timecheck_core::device::{
    full_memory_scenario, run_trials, AdversaryConfig, FullMemoryConfig, NoiseModel, Scenario, SRAM_BASELINE_MEAN_US,
};
use timecheck_core::exec::Execution;

fn quiet(s: Scenario) -> Scenario {
    Scenario { noise: NoiseModel::gaussian(0.0), ..s }
}

fn duration(s: &Scenario) -> u64 {
    run_trials(s, 1, Execution::Sequential).unwrap()[0].duration_us
}

#[test]
fn noiseless_sram_costs_match_the_reference_means() {
    let base = duration(&quiet(Scenario::sram_baseline(0))) as f64;
    assert!((base - SRAM_BASELINE_MEAN_US).abs() <= 1.0, "{base}");
    // 500 passes, one swapped word per pass.
    let dram = duration(&quiet(Scenario::sram_dram_attack(0))) as f64;
    let iomem = duration(&quiet(Scenario::sram_iomem_attack(0))) as f64;
    assert!((dram - base - 4_000.0).abs() <= 1.0, "{}", dram - base);
    assert!((iomem - base - 1_000.0).abs() <= 1.0, "{}", iomem - base);
}

#[test]
fn full_memory_mmc_shift() {
    let cfg = FullMemoryConfig { baseline_sigma_us: 0.0, mmc_sigma_us: 0.0, ..FullMemoryConfig::default() };
    let full = full_memory_scenario(&cfg);
    let base = duration(&full.baseline) as f64;
    let mmc = duration(&full.mmc) as f64;
    assert!((base - 1_731.895e6).abs() <= 1.0, "{base}");
    assert!((mmc - 1_735.465e6).abs() <= 2.0, "{mmc}");
}

#[test]
fn trials_do_not_depend_on_execution_mode() {
    let s = Scenario { passes: 20, ..Scenario::sram_dram_attack(17) };
    assert_eq!(run_trials(&s, 24, Execution::Sequential).unwrap(), run_trials(&s, 24, Execution::Parallel).unwrap());
}

#[test]
fn invalid_scenarios_are_refused() {
    assert!(run_trials(&Scenario { passes: 0, ..Scenario::sram_baseline(0) }, 1, Execution::Sequential).is_err());
    assert!(run_trials(&Scenario { image_words: 0, ..Scenario::sram_baseline(0) }, 1, Execution::Sequential).is_err());
    let bad_noise = Scenario { noise: NoiseModel::gaussian(-1.0), ..Scenario::sram_baseline(0) };
    assert!(run_trials(&bad_noise, 1, Execution::Sequential).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn latency_is_monotone_in_passes_and_attack_work(seed: u64, passes in 1u32..40, extra in 1u32..10, words in 1u64..8) {
        let base = quiet(Scenario { passes, ..Scenario::sram_baseline(seed) });
        let more = Scenario { passes: passes + extra, ..base.clone() };
        prop_assert!(duration(&more) > duration(&base));

        let light = Scenario { adversary: AdversaryConfig::dram_swap(words), ..base.clone() };
        let heavy = Scenario { adversary: AdversaryConfig::dram_swap(words + 1), ..base.clone() };
        prop_assert!(duration(&light) > duration(&base));
        prop_assert!(duration(&heavy) > duration(&light));
        let io = Scenario { adversary: AdversaryConfig::iomem_swap(words), ..base.clone() };
        prop_assert!(duration(&io) > duration(&base));
        prop_assert!(duration(&io) < duration(&light));
    }
}
