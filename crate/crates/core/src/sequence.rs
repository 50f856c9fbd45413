use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Two-scale temporal layout: `m` recurrent steps, each encoding a stack of
/// `n` consecutive frames, adjacent stacks sharing `w` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequencePlan {
    pub m: usize,
    pub n: usize,
    pub w: usize,
}

impl Default for SequencePlan {
    fn default() -> Self {
        Self { m: 1, n: 40, w: 0 }
    }
}

impl SequencePlan {
    pub fn new(m: usize, n: usize, w: usize) -> Result<Self> {
        let plan = Self { m, n, w };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(invalid(format!("sequence plan needs m ≥ 1 and n ≥ 1, got {self:?}")));
        }
        if self.w >= self.n {
            return Err(invalid(format!("overlap w={} must be below n={}", self.w, self.n)));
        }
        Ok(())
    }

    /// Distinct frames consumed: `m·n − (m−1)·w`.
    pub fn total_frames(&self) -> usize {
        self.m * self.n - (self.m - 1) * self.w
    }

    /// First frame of subsequence `k` within the window.
    pub fn subsequence_start(&self, k: usize) -> usize {
        k * (self.n - self.w)
    }

    /// Short label such as `1x40` or `2x20w5`.
    pub fn label(&self) -> String {
        if self.w == 0 {
            format!("{}x{}", self.m, self.n)
        } else {
            format!("{}x{}w{}", self.m, self.n, self.w)
        }
    }
}
