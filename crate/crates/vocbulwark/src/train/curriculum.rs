//! Accuracy-guided loss weighting.
//!
//! The perceptual weights step through {0.1, 0.2, 0.5} as extraction accuracy
//! crosses the two thresholds; the extraction weight is pinned at 1. The
//! schedule is stateless in accuracy: weights can move back down if accuracy
//! regresses.

use serde::{Deserialize, Serialize};

/// Loss weights plus thresholds and the running per-step accuracies of the
/// current epoch.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurriculumState {
    pub lambda_mel: f64,
    pub lambda_mstft: f64,
    pub lambda_ext: f64,
    pub tau1: f64,
    pub tau2: f64,
    #[serde(default)]
    pub acc_history: Vec<f64>,
}

impl Default for CurriculumState {
    fn default() -> Self {
        CurriculumState {
            lambda_mel: 0.1,
            lambda_mstft: 0.1,
            lambda_ext: 1.0,
            tau1: 0.9,
            tau2: 0.95,
            acc_history: Vec::new(),
        }
    }
}

/// Perceptual weight for a given accuracy.
pub fn perceptual_weight(acc: f64, tau1: f64, tau2: f64) -> f64 {
    if acc < tau1 {
        0.1
    } else if acc < tau2 {
        0.2
    } else {
        0.5
    }
}

/// End-of-epoch update: set both perceptual weights from the epoch accuracy,
/// leave the extraction weight untouched, and clear the step history.
pub fn agoc_update(cs: &CurriculumState, epoch_acc: f64) -> CurriculumState {
    let w = perceptual_weight(epoch_acc, cs.tau1, cs.tau2);
    CurriculumState {
        lambda_mel: w,
        lambda_mstft: w,
        lambda_ext: cs.lambda_ext,
        tau1: cs.tau1,
        tau2: cs.tau2,
        acc_history: Vec::new(),
    }
}

/// Fraction of bits recovered after thresholding probabilities at 0.5;
/// exactly 0.5 hardens to 0.
pub fn bit_accuracy(bits: &[u8], probs: &[f32]) -> f64 {
    assert_eq!(bits.len(), probs.len(), "bit_accuracy length mismatch");
    let hits = bits
        .iter()
        .zip(probs)
        .filter(|(&b, &p)| u8::from(p > 0.5) == b)
        .count();
    hits as f64 / bits.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_state_matches_contract() {
        let cs = CurriculumState::default();
        assert_eq!((cs.lambda_mel, cs.lambda_mstft, cs.lambda_ext), (0.1, 0.1, 1.0));
        assert_eq!((cs.tau1, cs.tau2), (0.9, 0.95));
    }

    #[test]
    fn branch_values_at_reference_points() {
        let cs = CurriculumState::default();
        let at = |acc: f64| {
            let next = agoc_update(&cs, acc);
            (next.lambda_mel, next.lambda_mstft)
        };
        assert_eq!(at(0.85), (0.1, 0.1));
        assert_eq!(at(0.92), (0.2, 0.2));
        assert_eq!(at(0.95), (0.5, 0.5)); // inclusive upper threshold
        assert_eq!(at(0.9), (0.2, 0.2)); // inclusive lower threshold
    }

    #[test]
    fn sweep_transitions_exactly_at_thresholds() {
        let cs = CurriculumState::default();
        let mut prev = None;
        for i in 0..=1000 {
            let acc = i as f64 / 1000.0;
            let next = agoc_update(&cs, acc);
            assert!(
                [0.1, 0.2, 0.5].contains(&next.lambda_mel),
                "acc {acc} gave {}",
                next.lambda_mel
            );
            assert_eq!(next.lambda_mel, next.lambda_mstft);
            assert_eq!(next.lambda_ext, 1.0);
            if let Some((pa, pw)) = prev {
                if pw != next.lambda_mel {
                    assert!(acc == 0.9 || acc == 0.95, "transition at {acc} (prev {pa})");
                }
            }
            prev = Some((acc, next.lambda_mel));
        }
    }

    #[test]
    fn update_is_monotone_when_accuracy_is() {
        let cs = CurriculumState::default();
        let accs = [0.3, 0.5, 0.85, 0.9, 0.93, 0.95, 0.99];
        let mut last = 0.0;
        for &a in &accs {
            let w = agoc_update(&cs, a).lambda_mel;
            assert!(w >= last);
            last = w;
        }
    }

    #[test]
    fn accuracy_hand_cases() {
        assert_eq!(bit_accuracy(&[1, 0, 1, 0], &[0.9, 0.2, 0.6, 0.4]), 1.0);
        // all-0.5 probabilities harden to zero, missing every one-bit
        assert_eq!(bit_accuracy(&[1, 1, 1], &[0.5, 0.5, 0.5]), 0.0);
        // perfectly inverted probabilities score zero
        let w = [1u8, 0, 1, 1, 0];
        let probs: Vec<f32> = w.iter().map(|&b| 1.0 - b as f32).collect();
        assert_eq!(bit_accuracy(&w, &probs), 0.0);
    }
}
