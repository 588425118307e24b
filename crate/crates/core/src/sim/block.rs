use alloc::vec::Vec;

/// A contiguous batch of differential-phase traces.
///
/// `samples` is row-major: trace `t`, bin `x` lives at `t * n_bins + x`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaterfallBlock {
    t0_s: f64,
    n_traces: usize,
    n_bins: usize,
    samples: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum BlockError {
    #[error("a block needs at least one trace and one bin")]
    Empty,
    #[error("expected {expected} samples for {n_traces} x {n_bins}, got {actual}")]
    Shape { n_traces: usize, n_bins: usize, expected: usize, actual: usize },
    #[error("non-finite sample at trace {trace}, bin {bin}")]
    NonFinite { trace: usize, bin: usize },
    #[error("block start time must be finite")]
    Time,
}

impl WaterfallBlock {
    pub fn new(t0_s: f64, n_traces: usize, n_bins: usize, samples: Vec<f64>) -> Result<Self, BlockError> {
        if n_traces == 0 || n_bins == 0 {
            return Err(BlockError::Empty);
        }
        if !t0_s.is_finite() {
            return Err(BlockError::Time);
        }
        let expected = n_traces * n_bins;
        if samples.len() != expected {
            return Err(BlockError::Shape { n_traces, n_bins, expected, actual: samples.len() });
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(BlockError::NonFinite { trace: i / n_bins, bin: i % n_bins });
        }
        Ok(Self { t0_s, n_traces, n_bins, samples })
    }

    pub fn t0_s(&self) -> f64 {
        self.t0_s
    }

    pub fn n_traces(&self) -> usize {
        self.n_traces
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn trace(&self, t: usize) -> &[f64] {
        &self.samples[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.samples.chunks_exact(self.n_bins)
    }

    /// Rounds every sample to the nearest `f32`, the precision of recordings.
    /// Live pipelines apply this so their input matches what a replay of the
    /// same stream would read back.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.samples {
            *v = *v as f32 as f64;
        }
    }

    /// Returns a copy with every sample multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { samples: self.samples.iter().map(|v| v * c).collect(), ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn shape_and_finiteness_checked() {
        assert_eq!(WaterfallBlock::new(0.0, 0, 4, vec![]), Err(BlockError::Empty));
        assert!(matches!(
            WaterfallBlock::new(0.0, 2, 2, vec![0.0; 3]),
            Err(BlockError::Shape { expected: 4, actual: 3, .. })
        ));
        assert_eq!(
            WaterfallBlock::new(0.0, 2, 2, vec![0.0, 0.0, f64::NAN, 0.0]),
            Err(BlockError::NonFinite { trace: 1, bin: 0 })
        );
        let b = WaterfallBlock::new(1.5, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(b.trace(1), &[3.0, 4.0]);
    }
}
