use alloc::vec::Vec;

use super::background::BackgroundModel;

/// Activity score and hysteresis state of every bin for one block.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivityMap {
    pub z: Vec<f64>,
    pub active: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("background model still warming up ({0} blocks remaining)")]
pub struct WarmupError(pub u32);

/// Scores `energy` against the background and applies hysteresis: a bin
/// turns on at `z >= k_on` and stays on while `z >= k_off`.
pub fn activity_scores(
    bg: &BackgroundModel,
    energy: &[f64],
    prev_active: &[bool],
    k_on: f64,
    k_off: f64,
) -> Result<ActivityMap, WarmupError> {
    if bg.in_warmup() {
        return Err(WarmupError(bg.warmup_blocks_remaining()));
    }
    let z: Vec<f64> = energy.iter().enumerate().map(|(x, &e)| (e - bg.mean()[x]) / bg.sigma(x)).collect();
    let active = z
        .iter()
        .enumerate()
        .map(|(x, &zx)| {
            let was_on = prev_active.get(x).copied().unwrap_or(false);
            if was_on {
                zx >= k_off
            } else {
                zx >= k_on
            }
        })
        .collect();
    Ok(ActivityMap { z, active })
}

/// Marks every bin within `radius` bins of an active bin.
pub fn dilate(active: &[bool], radius: usize) -> Vec<bool> {
    let n = active.len();
    let mut out = alloc::vec![false; n];
    for (x, _) in active.iter().enumerate().filter(|(_, &on)| on) {
        let hi = (x + radius).min(n - 1);
        out[x.saturating_sub(radius)..=hi].fill(true);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn bg() -> BackgroundModel {
        BackgroundModel::from_state(vec![1.0, 1.0, 0.0], vec![0.04, 0.04, 0.0], 0.01, 1e-6)
    }

    #[test]
    fn quiet_bins_score_zero() {
        let a = activity_scores(&bg(), &[1.0, 1.0, 0.0], &[false; 3], 5.0, 3.0).unwrap();
        assert_eq!(a.z, vec![0.0; 3]);
        assert_eq!(a.active, vec![false; 3]);
    }

    #[test]
    fn five_sigma_turns_on() {
        let a = activity_scores(&bg(), &[2.0, 1.0, 0.0], &[false; 3], 5.0, 3.0).unwrap();
        assert!((a.z[0] - 5.0).abs() < 1e-12);
        assert!(a.active[0]);
    }

    #[test]
    fn floor_used_for_degenerate_variance() {
        let a = activity_scores(&bg(), &[1.0, 1.0, 1e-7], &[false; 3], 5.0, 3.0).unwrap();
        assert!((a.z[2] - 0.1).abs() < 1e-9);
    }

    #[test]
    fn hysteresis_holds_between_thresholds() {
        let e = [1.8, 1.8, 0.0]; // z = 4
        let off = activity_scores(&bg(), &e, &[false; 3], 5.0, 3.0).unwrap();
        assert!(!off.active[0]);
        let on = activity_scores(&bg(), &e, &[true, false, false], 5.0, 3.0).unwrap();
        assert!(on.active[0]);
        let drop = activity_scores(&bg(), &[1.5, 1.0, 0.0], &[true, false, false], 5.0, 3.0).unwrap();
        assert!(!drop.active[0]);
    }

    #[test]
    fn warmup_rejected() {
        let m = BackgroundModel::new(3, 0.01, 2, 1e-6, true);
        assert_eq!(activity_scores(&m, &[0.0; 3], &[false; 3], 5.0, 3.0), Err(WarmupError(2)));
    }

    #[test]
    fn dilation_matches_naive() {
        let active = [false, false, true, false, false, false, false, false, true, true, false, false];
        for r in 0..4 {
            let naive: Vec<bool> =
                (0..active.len()).map(|x| (0..active.len()).any(|y| active[y] && x.abs_diff(y) <= r)).collect();
            assert_eq!(dilate(&active, r), naive, "radius {r}");
        }
    }
}
