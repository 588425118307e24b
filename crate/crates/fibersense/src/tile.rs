//! Downsampled waterfall tiles for display.

use fibersense_core::sim::{FiberLayout, WaterfallBlock};
use serde::{Deserialize, Serialize};

use crate::config::StreamDownsample;

/// Energy reference for the dB scale: 1 mrad².
pub const REF_ENERGY_RAD2: f64 = 1e-6;
pub const DB_MIN: f32 = -40.0;
pub const DB_MAX: f32 = 40.0;

/// Row-major (time × distance) block energy in dB, clamped to
/// [`DB_MIN`, `DB_MAX`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TilePacket {
    pub t0_s: f64,
    pub dt_s: f64,
    pub x0_m: f64,
    pub dx_m: f64,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

fn to_db(energy: f64) -> f32 {
    if energy <= 0.0 {
        return DB_MIN;
    }
    ((10.0 * (energy / REF_ENERGY_RAD2).log10()) as f32).clamp(DB_MIN, DB_MAX)
}

/// Mean-square of each `time_factor × space_factor` cell of `block`. A
/// trailing partial cell averages the samples it has.
pub fn make_tile(block: &WaterfallBlock, layout: &FiberLayout, ds: StreamDownsample) -> TilePacket {
    let (tf, sf) = (ds.time_factor, ds.space_factor);
    let n_bins = block.n_bins();
    let rows = block.n_traces().div_ceil(tf);
    let cols = n_bins.div_ceil(sf);
    let mut acc = vec![0.0f64; rows * cols];
    let mut count = vec![0u32; rows * cols];
    for (t, trace) in block.rows().enumerate() {
        let r = t / tf;
        for (x, &v) in trace.iter().enumerate() {
            let i = r * cols + x / sf;
            acc[i] += v * v;
            count[i] += 1;
        }
    }
    let values = acc.iter().zip(&count).map(|(&s, &n)| to_db(s / f64::from(n))).collect();
    TilePacket {
        t0_s: block.t0_s(),
        dt_s: tf as f64 / layout.pulse_rate_hz(),
        x0_m: 0.0,
        dx_m: sf as f64 * layout.bin_size_m(),
        rows,
        cols,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_average_energy_then_clamp() {
        let layout = FiberLayout::default();
        let n_bins = layout.n_bins();
        let mut samples = vec![0.0; 20 * n_bins];
        // one cell at 0.01 rad rms -> 1e-4 rad² -> +20 dB
        for t in 0..10 {
            samples[t * n_bins] = 0.01;
            samples[t * n_bins + 1] = 0.01;
        }
        samples[10 * n_bins + 4] = 100.0;
        let b = WaterfallBlock::new(2.0, 20, n_bins, samples).unwrap();
        let tile = make_tile(&b, &layout, StreamDownsample::default());
        assert_eq!((tile.rows, tile.cols), (2, 500));
        assert_eq!(tile.values.len(), tile.rows * tile.cols);
        assert!((tile.values[0] - 20.0).abs() < 1e-4);
        assert_eq!(tile.values[1], DB_MIN);
        assert_eq!(tile.values[500 + 2], DB_MAX);
        assert_eq!((tile.t0_s, tile.dt_s, tile.dx_m), (2.0, 0.01, 2.0));
    }

    #[test]
    fn partial_cells_use_available_samples() {
        let layout = FiberLayout::default();
        let n_bins = layout.n_bins();
        let b = WaterfallBlock::new(0.0, 5, n_bins, vec![0.1; 5 * n_bins]).unwrap();
        let ds = StreamDownsample { time_factor: 10, space_factor: 3 };
        let tile = make_tile(&b, &layout, ds);
        assert_eq!((tile.rows, tile.cols), (1, 334));
        assert!(tile.values.iter().all(|&v| (v - 40.0).abs() < 1e-4));
    }
}
