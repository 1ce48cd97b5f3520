use num_bigint::BigUint;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use timecheck_core::challenge::{collision_probe, multipass, multipass_naive, multipass_seeded, ChallengeSpec, ProbeShape};
use timecheck_core::checkpoint::MemoryImage;
use timecheck_core::coefficients::RandomSeeds;
use timecheck_core::exec::Execution;
use timecheck_core::field::{FieldParams, MERSENNE_61};
use timecheck_core::permutation::{Identity, Permutation};

/// Straight big-integer evaluation: coefficients as power sums, the scan
/// order read off the permutation, then the polynomial by explicit powers.
fn oracle(words: &[u64], r: &[u64], x: u64, p: u64, passes: u32, perm: &Permutation) -> u64 {
    let pb = BigUint::from(p);
    let d = words.len() as u64;
    let coeff = |c: u64| {
        r.iter().enumerate().fold(BigUint::from(0u32), |acc, (j, &rj)| {
            acc + BigUint::from(rj) * BigUint::from(c + 1).pow(j as u32)
        }) % &pb
    };
    let mut terms = Vec::new();
    for pass in 0..passes as u64 {
        for i in 0..d {
            let idx = perm.get(d - 1 - i).unwrap();
            let s: u64 = coeff(pass * d + idx).try_into().unwrap();
            terms.push(BigUint::from((words[idx as usize] ^ s) % p));
        }
    }
    let n = terms.len() as u32;
    let total = terms
        .iter()
        .enumerate()
        .fold(BigUint::from(0u32), |acc, (j, t)| acc + t * BigUint::from(x).modpow(&BigUint::from(n - 1 - j as u32), &pb));
    (total % pb).try_into().unwrap()
}

fn spec(r: Vec<u64>, x: u64, p: u64, perm_seed: u64, passes: u32) -> ChallengeSpec {
    ChallengeSpec::new(RandomSeeds::new(r, FieldParams::new(p, x).unwrap()).unwrap(), perm_seed, passes, "t").unwrap()
}

#[test]
fn hand_computed_single_pass() {
    // p = 13, x = 2, r = (1, 1): s_i = 1 + (i + 1); identity scan visits indices 2, 1, 0.
    // terms: (5 ^ 4) % 13 = 1, (6 ^ 3) % 13 = 5, (7 ^ 2) % 13 = 5
    // 1 * 4 + 5 * 2 + 5 = 19 = 6 mod 13
    let image = MemoryImage::new(vec![7, 6, 5], "t").unwrap();
    let s = spec(vec![1, 1], 2, 13, 0, 1);
    assert_eq!(multipass(&image, &s, &Identity(3)).unwrap().accumulator, 6);
    assert_eq!(multipass_naive(&image, &s, &Identity(3)).unwrap().accumulator, 6);
}

#[test]
fn matches_bigint_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (d, passes, p) in [(1, 1, 13), (5, 2, 101), (64, 3, MERSENNE_61), (256, 4, MERSENNE_61)] {
        let image = MemoryImage::random(d, "t", d as u64).unwrap();
        let s = ChallengeSpec::random(&mut rng, 4, p, passes, "t").unwrap();
        let perm = Permutation::new(d as u64, s.perm_seed).unwrap();
        let want = oracle(image.words(), s.seeds.values(), s.params().x(), p, passes, &perm);
        assert_eq!(multipass_seeded(&image, &s).unwrap().accumulator, want, "d={d} passes={passes}");
    }
}

#[test]
fn shape_check_rejects_overflowing_coefficient_index() {
    let image = MemoryImage::new(vec![1; 5], "t").unwrap();
    assert!(multipass(&image, &spec(vec![1, 2], 3, 13, 0, 2), &Identity(5)).is_ok());
    assert!(multipass(&image, &spec(vec![1, 2], 3, 13, 0, 3), &Identity(5)).is_err());
}

#[test]
fn collision_rate_on_tiny_field_is_near_one_over_p() {
    let shape = ProbeShape { k: 4, p: 13, words: 4, passes: 1 };
    let rate = collision_probe(shape, 20_000, 5, Execution::Sequential).unwrap();
    assert!(rate < 1.0 / 12.0 + 3.0 * (1.0f64 / 12.0 * 11.0 / 12.0 / 20_000.0).sqrt(), "rate {rate}");
    assert!(rate > 0.05, "rate {rate}");
}

#[test]
fn collision_probe_is_deterministic_across_execution_modes() {
    let shape = ProbeShape { k: 4, p: 13, words: 8, passes: 1 };
    let a = collision_probe(shape, 2_000, 9, Execution::Sequential).unwrap();
    let b = collision_probe(shape, 2_000, 9, Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn streaming_equals_materialized(
        words in prop::collection::vec(any::<u64>(), 1..40),
        r in prop::collection::vec(0..MERSENNE_61, 1..6),
        x in 0..MERSENNE_61,
        perm_seed: u64,
        passes in 1u32..4,
    ) {
        let image = MemoryImage::new(words.clone(), "t").unwrap();
        let s = spec(r, x, MERSENNE_61, perm_seed, passes);
        let perm = Permutation::new(words.len() as u64, perm_seed).unwrap();
        prop_assert_eq!(multipass(&image, &s, &perm).unwrap(), multipass_naive(&image, &s, &perm).unwrap());
    }

    #[test]
    fn any_single_word_change_is_detectable_under_some_challenge(
        words in prop::collection::vec(any::<u64>(), 2..20),
        at in any::<prop::sample::Index>(),
        flip in 1u64..,
        seed: u64,
    ) {
        let image = MemoryImage::new(words.clone(), "t").unwrap();
        let mut tampered = words;
        let i = at.index(tampered.len());
        tampered[i] ^= flip;
        let tampered = MemoryImage::new(tampered, "t").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let differs = (0..8).any(|_| {
            let s = ChallengeSpec::random(&mut rng, 4, MERSENNE_61, 1, "t").unwrap();
            multipass_seeded(&image, &s).unwrap().accumulator != multipass_seeded(&tampered, &s).unwrap().accumulator
        });
        prop_assert!(differs);
    }
}
