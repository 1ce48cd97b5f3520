//! Exact arithmetic over the prime field Z_p for 64-bit moduli.
//!
//! All products go through a 128-bit intermediate, so every function here is
//! exact for any modulus that fits in a `u64`.

use serde::{Deserialize, Serialize};

use crate::error::FieldError;

/// The Mersenne prime 2^61 - 1, the default production modulus.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// Prime modulus `p` together with the evaluation point `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawFieldParams", into = "RawFieldParams")]
pub struct FieldParams {
    p: u64,
    x: u64,
}

#[derive(Serialize, Deserialize)]
struct RawFieldParams {
    p: u64,
    x: u64,
}

impl TryFrom<RawFieldParams> for FieldParams {
    type Error = FieldError;

    fn try_from(raw: RawFieldParams) -> Result<Self, Self::Error> {
        FieldParams::new(raw.p, raw.x)
    }
}

impl From<FieldParams> for RawFieldParams {
    fn from(f: FieldParams) -> Self {
        RawFieldParams { p: f.p, x: f.x }
    }
}

impl FieldParams {
    /// Validates that `p` is prime and `x < p`.
    pub fn new(p: u64, x: u64) -> Result<Self, FieldError> {
        if !is_prime(p) {
            return Err(FieldError::NotPrime(p));
        }
        if x >= p {
            return Err(FieldError::NotInField { value: x, p });
        }
        Ok(FieldParams { p, x })
    }

    #[inline]
    pub fn p(&self) -> u64 {
        self.p
    }

    #[inline]
    pub fn x(&self) -> u64 {
        self.x
    }

    /// Same modulus, different evaluation point.
    pub fn with_x(&self, x: u64) -> Result<Self, FieldError> {
        FieldParams::new(self.p, x)
    }
}

/// `(a * b) mod p` via a double-width product. Exact for any `u64` operands,
/// reduced or not.
#[inline]
pub fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

/// `(a + b) mod p` without intermediate overflow.
#[inline]
pub fn add_mod(a: u64, b: u64, p: u64) -> u64 {
    debug_assert!(a < p && b < p, "add_mod operands must be reduced");
    // a + b may exceed u64::MAX when p > 2^63; compare against the gap instead.
    if a >= p - b {
        a - (p - b)
    } else {
        a + b
    }
}

/// `base^e mod p` by square-and-multiply. `0^0` is 1.
pub fn pow_mod(base: u64, mut e: u64, p: u64) -> u64 {
    debug_assert!(base < p);
    let mut result = 1 % p;
    let mut b = base;
    while e > 0 {
        if e & 1 == 1 {
            result = mul_mod(result, b, p);
        }
        b = mul_mod(b, b, p);
        e >>= 1;
    }
    result
}

/// One Horner accumulation: `(acc * x + term) mod p`.
#[inline]
pub fn horner_step(acc: u64, x: u64, term: u64, p: u64) -> u64 {
    debug_assert!(acc < p && x < p && term < p);
    ((acc as u128 * x as u128 + term as u128) % p as u128) as u64
}

fn pow_mod_u128(base: u64, mut e: u64, n: u64) -> u64 {
    let mut result: u64 = 1;
    let mut b = base % n;
    while e > 0 {
        if e & 1 == 1 {
            result = ((result as u128 * b as u128) % n as u128) as u64;
        }
        b = ((b as u128 * b as u128) % n as u128) as u64;
        e >>= 1;
    }
    result
}

/// Deterministic Miller-Rabin for the full `u64` range.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &q in &BASES {
        if n.is_multiple_of(q) {
            return n == q;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut y = pow_mod_u128(a, d, n);
        if y == 1 || y == n - 1 {
            continue;
        }
        for _ in 1..s {
            y = ((y as u128 * y as u128) % n as u128) as u64;
            if y == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
