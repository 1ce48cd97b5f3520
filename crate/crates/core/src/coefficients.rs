//! On-demand k-wise independent coefficients.
//!
//! `s_i = sum_{j<k} r_j * (i + 1)^j mod p`, evaluated by Horner's rule in `j`.
//! Nothing proportional to the image size or to `k` is ever allocated per call.

use serde::{Deserialize, Serialize};

use crate::error::FieldError;
use crate::field::{horner_step, FieldParams};

/// The `k` random values `r_0 .. r_{k-1}` plus the field they live in.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSeeds {
    r: Vec<u64>,
    params: FieldParams,
}

impl RandomSeeds {
    pub fn new(r: Vec<u64>, params: FieldParams) -> Result<Self, FieldError> {
        if r.is_empty() {
            return Err(FieldError::EmptySeeds);
        }
        if let Some(&bad) = r.iter().find(|&&v| v >= params.p()) {
            return Err(FieldError::NotInField { value: bad, p: params.p() });
        }
        Ok(RandomSeeds { r, params })
    }

    /// Independence parameter `k`.
    pub fn k(&self) -> usize {
        self.r.len()
    }

    pub fn values(&self) -> &[u64] {
        &self.r
    }

    pub fn params(&self) -> &FieldParams {
        &self.params
    }

    /// `s_index`, rejecting indices whose evaluation point `index + 1` is not
    /// a field element.
    pub fn coefficient_at(&self, index: u64) -> Result<u64, FieldError> {
        let p = self.params.p();
        if index >= p - 1 {
            return Err(FieldError::IndexOutOfField { index, p });
        }
        Ok(self.coefficient_unchecked(index))
    }

    /// Caller guarantees `index + 1 < p`.
    #[inline]
    pub(crate) fn coefficient_unchecked(&self, index: u64) -> u64 {
        let p = self.params.p();
        let point = index + 1;
        debug_assert!(point < p);
        self.r.iter().rev().fold(0, |acc, &r| horner_step(acc, point, r, p))
    }
}
