//! Multi-pass randomized polynomial evaluation.
//!
//! For `pass` in `0..P` and `i` in `0..d`:
//!
//! ```text
//! idx       = pi[d - 1 - i]
//! coeff_idx = pass * d + idx
//! l         = (v[idx] XOR s_{coeff_idx}) mod p
//! result    = (result * x + l) mod p
//! ```
//!
//! The permutation is fixed for the whole challenge; coefficient freshness
//! across passes comes from `coeff_idx` alone. The streaming path keeps only
//! the accumulator, loop counters and the seeds: no coefficient table and no
//! permuted copy of the image is ever built.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::MemoryImage;
use crate::coefficients::RandomSeeds;
use crate::error::ChallengeError;
use crate::exec::{derive_seed, map_indexed, Execution};
use crate::field::{add_mod, horner_step, mul_mod, pow_mod, FieldParams};
use crate::permutation::{Permutation, PermutationProvider};

/// Largest image the materializing oracle accepts.
pub const NAIVE_MAX_WORDS: u64 = 1 << 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeSpec {
    pub seeds: RandomSeeds,
    pub perm_seed: u64,
    pub passes: u32,
    pub region_id: String,
}

impl ChallengeSpec {
    pub fn new(seeds: RandomSeeds, perm_seed: u64, passes: u32, region_id: impl Into<String>) -> Result<Self, ChallengeError> {
        if passes == 0 {
            return Err(ChallengeError::NoPasses);
        }
        Ok(ChallengeSpec { seeds, perm_seed, passes, region_id: region_id.into() })
    }

    /// Fresh uniform `r_0..r_{k-1}`, `x` and permutation seed.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        k: usize,
        p: u64,
        passes: u32,
        region_id: impl Into<String>,
    ) -> Result<Self, ChallengeError> {
        let params = FieldParams::new(p, rng.random_range(0..p))?;
        let r = (0..k).map(|_| rng.random_range(0..p)).collect();
        let seeds = RandomSeeds::new(r, params)?;
        Self::new(seeds, rng.next_u64(), passes, region_id)
    }

    pub fn params(&self) -> &FieldParams {
        self.seeds.params()
    }

    /// Checks that every coefficient index of a `words`-word scan stays in the field.
    pub fn check_shape(&self, words: u64) -> Result<(), ChallengeError> {
        let p = self.params().p();
        match (self.passes as u64).checked_mul(words) {
            Some(total) if total < p => Ok(()),
            _ => Err(ChallengeError::SpecOutOfField { passes: self.passes, words, p }),
        }
    }

    /// Hex SHA-256 over a canonical encoding of every field, truncated to 16 characters.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.params().p().to_le_bytes());
        h.update(self.params().x().to_le_bytes());
        h.update((self.seeds.k() as u64).to_le_bytes());
        for r in self.seeds.values() {
            h.update(r.to_le_bytes());
        }
        h.update(self.perm_seed.to_le_bytes());
        h.update(self.passes.to_le_bytes());
        h.update(self.region_id.as_bytes());
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeResult {
    pub accumulator: u64,
    pub words_scanned: u64,
    pub spec_digest: String,
}

fn validate<P: PermutationProvider + ?Sized>(image: &MemoryImage, spec: &ChallengeSpec, perm: &P) -> Result<u64, ChallengeError> {
    let d = image.word_count() as u64;
    if d == 0 {
        return Err(ChallengeError::EmptyImage);
    }
    if spec.passes == 0 {
        return Err(ChallengeError::NoPasses);
    }
    if perm.domain() != d {
        return Err(ChallengeError::PermutationDomainMismatch { perm: perm.domain(), words: d });
    }
    spec.check_shape(d)?;
    Ok(d)
}

/// The streaming evaluation with an explicit permutation provider.
pub fn multipass<P: PermutationProvider + ?Sized>(
    image: &MemoryImage,
    spec: &ChallengeSpec,
    perm: &P,
) -> Result<ChallengeResult, ChallengeError> {
    let d = validate(image, spec, perm)?;
    let v = image.words();
    let p = spec.params().p();
    let x = spec.params().x();
    let mut result = 0u64;
    for pass in 0..spec.passes as u64 {
        for i in 0..d {
            let idx = perm.index_of(d - 1 - i)?;
            let s = spec.seeds.coefficient_unchecked(pass * d + idx);
            let term = (v[idx as usize] ^ s) % p;
            result = horner_step(result, x, term, p);
        }
    }
    Ok(ChallengeResult {
        accumulator: result,
        words_scanned: spec.passes as u64 * d,
        spec_digest: spec.digest(),
    })
}

/// [`multipass`] with the Feistel permutation keyed by `spec.perm_seed`.
pub fn multipass_seeded(image: &MemoryImage, spec: &ChallengeSpec) -> Result<ChallengeResult, ChallengeError> {
    let perm = Permutation::new(image.word_count() as u64, spec.perm_seed)?;
    multipass(image, spec, &perm)
}

/// Reference evaluation that materializes the coefficient table and the
/// permuted term sequence, then sums `term_j * x^(n-1-j)` with explicit powers.
pub fn multipass_naive<P: PermutationProvider + ?Sized>(
    image: &MemoryImage,
    spec: &ChallengeSpec,
    perm: &P,
) -> Result<ChallengeResult, ChallengeError> {
    let d = validate(image, spec, perm)?;
    if d > NAIVE_MAX_WORDS {
        return Err(ChallengeError::OracleTooLarge { words: d, max: NAIVE_MAX_WORDS });
    }
    let p = spec.params().p();
    let x = spec.params().x();
    let r = spec.seeds.values();
    let total = spec.passes as u64 * d;

    let coefficients: Vec<u64> = (0..total)
        .map(|c| {
            (0..r.len()).fold(0, |acc, j| add_mod(acc, mul_mod(r[j], pow_mod(c + 1, j as u64, p), p), p))
        })
        .collect();
    let order: Vec<u64> = (0..d).map(|rank| perm.index_of(rank)).collect::<Result<_, _>>()?;

    let mut terms = Vec::with_capacity(total as usize);
    for pass in 0..spec.passes as u64 {
        for i in 0..d {
            let idx = order[(d - 1 - i) as usize];
            let s = coefficients[(pass * d + idx) as usize];
            terms.push((image.words()[idx as usize] ^ s) % p);
        }
    }
    let n = terms.len() as u64;
    let accumulator = terms
        .iter()
        .enumerate()
        .fold(0, |acc, (j, &t)| add_mod(acc, mul_mod(t, pow_mod(x, n - 1 - j as u64, p), p), p));
    Ok(ChallengeResult { accumulator, words_scanned: total, spec_digest: spec.digest() })
}

/// Challenge shape for the collision experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeShape {
    pub k: usize,
    pub p: u64,
    pub words: usize,
    pub passes: u32,
}

/// Fraction of random distinct image pairs that collide under a freshly
/// drawn challenge of the given shape.
pub fn collision_probe(shape: ProbeShape, trials: u64, seed: u64, exec: Execution) -> Result<f64, ChallengeError> {
    collision_probe_with(shape, trials, seed, exec, |rng, d| loop {
        let a: Vec<u64> = (0..d).map(|_| rng.next_u64()).collect();
        let b: Vec<u64> = (0..d).map(|_| rng.next_u64()).collect();
        if a != b {
            break (a, b);
        }
    })
}

/// Like [`collision_probe`] with a caller-supplied pair generator.
pub fn collision_probe_with<G>(shape: ProbeShape, trials: u64, seed: u64, exec: Execution, pairs: G) -> Result<f64, ChallengeError>
where
    G: Fn(&mut ChaCha8Rng, usize) -> (Vec<u64>, Vec<u64>) + Sync + Send,
{
    if trials == 0 {
        return Ok(0.0);
    }
    let outcomes = map_indexed(exec, trials, |t| -> Result<bool, ChallengeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "collision", t));
        let spec = ChallengeSpec::random(&mut rng, shape.k, shape.p, shape.passes, "probe")?;
        let (a, b) = pairs(&mut rng, shape.words);
        let a = MemoryImage::new(a, "probe").map_err(|_| ChallengeError::EmptyImage)?;
        let b = MemoryImage::new(b, "probe").map_err(|_| ChallengeError::EmptyImage)?;
        let perm = Permutation::new(shape.words as u64, spec.perm_seed)?;
        Ok(multipass(&a, &spec, &perm)?.accumulator == multipass(&b, &spec, &perm)?.accumulator)
    });
    let mut hits = 0u64;
    for o in outcomes {
        hits += o? as u64;
    }
    Ok(hits as f64 / trials as f64)
}
