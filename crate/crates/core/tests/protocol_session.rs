use std::net::TcpListener;
use std::time::Duration;

use proptest::prelude::*;
use timecheck_core::device::{run_trials, Scenario};
use timecheck_core::error::ProtocolError;
use timecheck_core::exec::Execution;
use timecheck_core::protocol::{
    serve_tcp, ChallengeShape, HostileDevice, Hostility, LoopbackChannel, SimulatedDevice, TcpChannel, Verifier,
};
use timecheck_core::stats::{calibrate, Decision, Detector, RejectReason, RepeatPolicy};

fn small(s: Scenario) -> Scenario {
    Scenario { image_words: 40, passes: 5, ..s }
}

fn verifier_for(dev: &SimulatedDevice, seed: u64) -> Verifier {
    let s = dev.scenario();
    let shape = ChallengeShape { k: s.k, p: s.p, passes: s.passes, region_id: s.region_id.clone() };
    Verifier::new(dev.checkpoint().scan_image(), shape, seed)
}

#[test]
fn loopback_timing_error_stays_within_twice_the_jitter() {
    for jitter in [0u64, 1, 3, 50] {
        let dev = SimulatedDevice::new(small(Scenario::sram_baseline(1))).unwrap();
        let mut v = verifier_for(&dev, 2);
        let mut exact = LoopbackChannel::in_process(SimulatedDevice::new(small(Scenario::sram_baseline(1))).unwrap());
        let mut v_exact = verifier_for(exact.device(), 2);
        let mut noisy = LoopbackChannel::jittered(dev, jitter, 99);
        for _ in 0..50 {
            let a = v_exact.session(&mut exact).unwrap().timed.duration_us() as i64;
            let b = v.session(&mut noisy).unwrap().timed.duration_us() as i64;
            assert!((a - b).unsigned_abs() <= 2 * jitter, "jitter {jitter}: {a} vs {b}");
        }
    }
}

#[test]
fn attestation_separates_honest_and_hostile_devices() {
    let clean = Scenario { image_words: 40, ..Scenario::sram_baseline(3) };
    let samples: Vec<f64> = run_trials(&clean, 50, Execution::Sequential).unwrap().iter().map(|m| m.duration_us as f64).collect();
    let profile = calibrate(&samples).unwrap();
    let policy = RepeatPolicy::default();
    let detector = Detector::percentile();

    let dev = SimulatedDevice::new(clean.clone()).unwrap();
    let mut v = verifier_for(&dev, 4);
    let mut ch = LoopbackChannel::jittered(dev, 3, 5);
    assert_eq!(v.attest(&mut ch, &profile, &detector, &policy).unwrap().decision, Decision::Accept);

    let dev = SimulatedDevice::new(Scenario { image_words: 40, ..Scenario::sram_dram_attack(3) }).unwrap();
    let mut v = verifier_for(&dev, 6);
    let mut ch = LoopbackChannel::jittered(dev, 3, 7);
    assert_eq!(v.attest(&mut ch, &profile, &detector, &policy).unwrap().decision, Decision::Reject(RejectReason::Timing));

    let inner = SimulatedDevice::new(clean).unwrap();
    let mut v = verifier_for(&inner, 8);
    let mut ch = LoopbackChannel::jittered(HostileDevice::new(inner, Hostility::WrongResult), 3, 9);
    assert_eq!(
        v.attest(&mut ch, &profile, &detector, &policy).unwrap().decision,
        Decision::Reject(RejectReason::ValueMismatch)
    );
}

#[test]
fn replayed_and_silent_devices_are_errors() {
    let inner = SimulatedDevice::new(small(Scenario::sram_baseline(1))).unwrap();
    let mut v = verifier_for(&inner, 1);
    let mut ch = LoopbackChannel::in_process(HostileDevice::new(inner, Hostility::ReplayStale));
    v.session(&mut ch).unwrap();
    assert!(matches!(v.session(&mut ch), Err(ProtocolError::SessionMismatch { .. })));

    let inner = SimulatedDevice::new(small(Scenario::sram_baseline(1))).unwrap();
    let mut v = verifier_for(&inner, 1);
    let mut ch = LoopbackChannel::in_process(HostileDevice::new(inner, Hostility::Silent)).with_timeout(1_000);
    assert!(matches!(v.session(&mut ch), Err(ProtocolError::ChannelTimeout)));
}

#[test]
fn tcp_session_round_trip() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let scenario = Scenario { image_words: 20, passes: 2, ..Scenario::sram_baseline(11) };
    let mut dev = SimulatedDevice::new(scenario.clone()).unwrap();
    let mut v = verifier_for(&dev, 12);
    let server = std::thread::spawn(move || serve_tcp(&listener, &mut dev, 1e-6, Some(1)));
    let mut ch = TcpChannel::connect(addr.to_string(), Duration::from_secs(10), 1e-6).unwrap();
    for _ in 0..3 {
        let rec = v.session(&mut ch).unwrap();
        assert_eq!(rec.timed.response.accumulator, rec.expected.accumulator);
    }
    drop(ch);
    server.join().unwrap().unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn restore_makes_sessions_independent_of_prior_tampering(seed: u64, disturb: u64) {
        let scenario = Scenario { image_words: 16, passes: 2, ..Scenario::sram_baseline(seed) };
        let mut dev = SimulatedDevice::new(scenario).unwrap();
        dev.disturb(disturb);
        let mut v = verifier_for(&dev, seed ^ 1);
        let mut ch = LoopbackChannel::in_process(dev);
        let rec = v.session(&mut ch).unwrap();
        prop_assert_eq!(rec.timed.response.accumulator, rec.expected.accumulator);
    }
}
