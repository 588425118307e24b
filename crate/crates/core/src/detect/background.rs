//! Per-bin moving mean and moving variance of block energy.
//!
//! In steady state each unfrozen bin follows
//!
//! ```text
//! mean' = (1 - a) * mean + a * e
//! var'  = (1 - a) * var  + a * (e - mean)^2     (pre-update mean)
//! ```
//!
//! The mean is evaluated as `mean + a * (e - mean)`, which leaves it exactly
//! unchanged when `e == mean`.
//!
//! With warm start enabled the first update of a bin sets `mean = e,
//! var = 0`, and the k-th update (k >= 2) uses `a = max(alpha, 1/k)`, so the
//! estimate converges within the warmup period instead of after ~1/alpha
//! blocks.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("expected {expected} bins, got {actual}")]
pub struct DimensionMismatch {
    pub expected: usize,
    pub actual: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundModel {
    mean: Vec<f64>,
    var: Vec<f64>,
    updates: Vec<u64>,
    alpha: f64,
    warmup_blocks_remaining: u32,
    sigma_floor: f64,
    warm_start: bool,
}

impl BackgroundModel {
    pub fn new(n_bins: usize, alpha: f64, warmup_blocks: u32, sigma_floor: f64, warm_start: bool) -> Self {
        Self {
            mean: vec![0.0; n_bins],
            var: vec![0.0; n_bins],
            updates: vec![0; n_bins],
            alpha,
            warmup_blocks_remaining: warmup_blocks,
            sigma_floor,
            warm_start,
        }
    }

    /// A model with explicit statistics, no warmup and no warm start.
    pub fn from_state(mean: Vec<f64>, var: Vec<f64>, alpha: f64, sigma_floor: f64) -> Self {
        assert_eq!(mean.len(), var.len());
        let n = mean.len();
        Self {
            mean,
            var,
            updates: vec![u64::MAX; n],
            alpha,
            warmup_blocks_remaining: 0,
            sigma_floor,
            warm_start: false,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    pub fn warmup_blocks_remaining(&self) -> u32 {
        self.warmup_blocks_remaining
    }

    pub fn in_warmup(&self) -> bool {
        self.warmup_blocks_remaining > 0
    }

    /// Effective standard deviation of bin `x`, never below the floor.
    pub fn sigma(&self, x: usize) -> f64 {
        libm::sqrt(self.var[x]).max(self.sigma_floor)
    }

    /// Folds one block's energy into the model. Bins whose `freeze` flag is
    /// set keep their statistics. The warmup counter drops by one per call.
    pub fn update(&mut self, energy: &[f64], freeze: Option<&[bool]>) -> Result<(), DimensionMismatch> {
        let n = self.n_bins();
        if energy.len() != n {
            return Err(DimensionMismatch { expected: n, actual: energy.len() });
        }
        if let Some(f) = freeze {
            if f.len() != n {
                return Err(DimensionMismatch { expected: n, actual: f.len() });
            }
        }
        for x in 0..n {
            if freeze.is_some_and(|f| f[x]) {
                continue;
            }
            let e = energy[x];
            let k = self.updates[x];
            if self.warm_start && k == 0 {
                self.mean[x] = e;
                self.var[x] = 0.0;
            } else {
                let a = if self.warm_start { self.alpha.max(1.0 / (k as f64 + 1.0)) } else { self.alpha };
                let d = e - self.mean[x];
                self.mean[x] += a * d;
                self.var[x] = (1.0 - a) * self.var[x] + a * d * d;
            }
            self.updates[x] = k.saturating_add(1);
        }
        self.warmup_blocks_remaining = self.warmup_blocks_remaining.saturating_sub(1);
        Ok(())
    }
}
