use std::collections::HashMap;

use proptest::prelude::*;
use timecheck_core::coefficients::RandomSeeds;
use timecheck_core::field::{FieldParams, MERSENNE_61};

fn seeds(r: Vec<u64>, p: u64) -> RandomSeeds {
    RandomSeeds::new(r, FieldParams::new(p, 0).unwrap()).unwrap()
}

/// Every pair of distinct indices sees each of the p^2 value pairs exactly
/// once as (r0, r1) ranges over Z_p^2.
#[test]
fn pairwise_uniform_by_enumeration() {
    let p = 17;
    let table: Vec<Vec<u64>> = (0..p * p)
        .map(|t| {
            let s = seeds(vec![t / p, t % p], p);
            (0..10).map(|i| s.coefficient_at(i).unwrap()).collect()
        })
        .collect();
    for i1 in 0..10 {
        for i2 in 0..10 {
            if i1 == i2 {
                continue;
            }
            let mut counts: HashMap<(u64, u64), u32> = HashMap::new();
            for row in &table {
                *counts.entry((row[i1], row[i2])).or_default() += 1;
            }
            assert_eq!(counts.len() as u64, p * p, "pair ({i1}, {i2})");
            assert!(counts.values().all(|&c| c == 1));
        }
    }
}

/// Three-wise version on a smaller field.
#[test]
fn three_wise_uniform_by_enumeration() {
    let p = 7u64;
    let mut rows = Vec::new();
    for a in 0..p {
        for b in 0..p {
            for c in 0..p {
                let s = seeds(vec![a, b, c], p);
                rows.push((0..5).map(|i| s.coefficient_at(i).unwrap()).collect::<Vec<_>>());
            }
        }
    }
    for (i, j, l) in [(0, 1, 2), (0, 2, 4), (1, 3, 4), (2, 3, 4)] {
        let mut counts: HashMap<(u64, u64, u64), u32> = HashMap::new();
        for row in &rows {
            *counts.entry((row[i], row[j], row[l])).or_default() += 1;
        }
        assert_eq!(counts.len() as u64, p * p * p);
    }
}

#[test]
fn index_must_leave_room_in_the_field() {
    let s = seeds(vec![1, 2], 13);
    assert!(s.coefficient_at(11).is_ok());
    assert!(s.coefficient_at(12).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn coefficient_is_the_power_sum(r in prop::collection::vec(0..MERSENNE_61, 1..8), index in 0u64..1_000_000) {
        let s = seeds(r.clone(), MERSENNE_61);
        let base = num_bigint::BigUint::from(index + 1);
        let p = num_bigint::BigUint::from(MERSENNE_61);
        let expected = r.iter().enumerate().fold(num_bigint::BigUint::from(0u32), |acc, (j, &rj)| {
            (acc + num_bigint::BigUint::from(rj) * base.modpow(&num_bigint::BigUint::from(j as u64), &p)) % &p
        });
        prop_assert_eq!(num_bigint::BigUint::from(s.coefficient_at(index).unwrap()), expected);
    }
}
