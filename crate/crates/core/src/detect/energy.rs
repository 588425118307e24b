use alloc::vec;
use alloc::vec::Vec;

use crate::sim::WaterfallBlock;

/// Per-bin mean square of the block's samples.
pub fn block_energy(block: &WaterfallBlock) -> Vec<f64> {
    let mut e = vec![0.0; block.n_bins()];
    block_energy_into(block, &mut e);
    e
}

pub fn block_energy_into(block: &WaterfallBlock, out: &mut [f64]) {
    out.fill(0.0);
    for row in block.rows() {
        for (acc, &v) in out.iter_mut().zip(row) {
            *acc += v * v;
        }
    }
    let inv = 1.0 / block.n_traces() as f64;
    for acc in out.iter_mut() {
        *acc *= inv;
    }
}
