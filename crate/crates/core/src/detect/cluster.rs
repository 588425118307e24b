use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// A run of active bins localized as one event candidate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialCluster {
    /// First and last bin, inclusive.
    pub x_start_bin: usize,
    pub x_end_bin: usize,
    /// Excess-energy weighted mean of the active bin centers.
    pub centroid_m: f64,
    pub peak_z: f64,
    pub total_excess_energy: f64,
}

impl SpatialCluster {
    pub fn width_bins(&self) -> usize {
        self.x_end_bin - self.x_start_bin + 1
    }

    pub fn x_start_m(&self, bin_size_m: f64) -> f64 {
        self.x_start_bin as f64 * bin_size_m
    }

    pub fn x_end_m(&self, bin_size_m: f64) -> f64 {
        (self.x_end_bin + 1) as f64 * bin_size_m
    }
}

/// Groups active bins into clusters. Two active bins belong to the same
/// cluster when at most `gap_bins` bins apart (transitively); clusters
/// narrower than `min_width_bins` are dropped.
///
/// `excess[x]` is the bin's energy above background; negative excess gets
/// zero weight in the centroid.
pub fn segment_active_bins(
    active: &[bool],
    z: &[f64],
    excess: &[f64],
    bin_size_m: f64,
    gap_bins: usize,
    min_width_bins: usize,
) -> Vec<SpatialCluster> {
    let mut clusters = Vec::new();
    let mut run: Option<(usize, usize)> = None;
    for x in (0..active.len()).filter(|&x| active[x]) {
        run = match run {
            Some((start, end)) if x - end <= gap_bins => Some((start, x)),
            Some((start, end)) => {
                push_cluster(&mut clusters, start, end, active, z, excess, bin_size_m, min_width_bins);
                Some((x, x))
            }
            None => Some((x, x)),
        };
    }
    if let Some((start, end)) = run {
        push_cluster(&mut clusters, start, end, active, z, excess, bin_size_m, min_width_bins);
    }
    clusters
}

#[allow(clippy::too_many_arguments)]
fn push_cluster(
    out: &mut Vec<SpatialCluster>,
    start: usize,
    end: usize,
    active: &[bool],
    z: &[f64],
    excess: &[f64],
    bin_size_m: f64,
    min_width_bins: usize,
) {
    if end - start + 1 < min_width_bins {
        return;
    }
    let (mut wsum, mut xsum, mut peak) = (0.0, 0.0, f64::NEG_INFINITY);
    for x in (start..=end).filter(|&x| active[x]) {
        let w = excess[x].max(0.0);
        wsum += w;
        xsum += w * (x as f64 + 0.5) * bin_size_m;
        peak = peak.max(z[x]);
    }
    let centroid_m = if wsum > 0.0 { xsum / wsum } else { (start + end + 1) as f64 * 0.5 * bin_size_m };
    out.push(SpatialCluster {
        x_start_bin: start,
        x_end_bin: end,
        centroid_m,
        peak_z: peak,
        total_excess_energy: wsum,
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn run(bins: &[usize], n: usize) -> Vec<SpatialCluster> {
        let mut active = vec![false; n];
        for &b in bins {
            active[b] = true;
        }
        segment_active_bins(&active, &vec![6.0; n], &vec![1.0; n], 1.0, 3, 2)
    }

    #[test]
    fn none_active() {
        assert!(run(&[], 30).is_empty());
    }

    #[test]
    fn adjacent_bins_form_one_cluster() {
        let c = run(&[10, 11, 12], 30);
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].x_start_bin, c[0].x_end_bin), (10, 12));
        assert_eq!(c[0].centroid_m, 11.5);
    }

    #[test]
    fn narrow_isolated_bin_dropped() {
        let c = run(&[10, 11, 16], 30);
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].x_start_bin, c[0].x_end_bin), (10, 11));
    }

    #[test]
    fn gap_of_three_bridges() {
        let c = run(&[10, 13], 30);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].width_bins(), 4);
        assert!(run(&[10, 14], 30).is_empty());
    }

    #[test]
    fn centroid_weighted_by_excess() {
        let active = vec![false, true, true, false];
        let c = segment_active_bins(&active, &[0.0, 5.0, 9.0, 0.0], &[0.0, 1.0, 3.0, 0.0], 2.0, 3, 2);
        // centers 3 m and 5 m, weights 1 and 3
        assert_eq!(c[0].centroid_m, 4.5);
        assert_eq!(c[0].peak_z, 9.0);
        assert_eq!((c[0].x_start_m(2.0), c[0].x_end_m(2.0)), (2.0, 6.0));
    }
}
