use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How per-frame errors are aggregated over a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorStatistic {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEvaluation {
    pub frame: usize,
    /// Absolute depth error per keypoint; `None` where the keypoint was not visible.
    pub keypoint_errors: Vec<Option<f64>>,
    /// Mean absolute depth error over the task mask.
    pub scene_error: f64,
}

/// Scores one frame. `keypoint_pred[i]` is `None` for keypoints that were not observed.
pub fn evaluate_frame(
    frame: usize,
    keypoint_pred: &[Option<f64>],
    keypoint_truth: &[f64],
    mask_pred: &[f64],
    mask_truth: &[f64],
) -> Result<FrameEvaluation> {
    if keypoint_pred.len() != keypoint_truth.len() {
        return Err(Error::Arity { expected: keypoint_truth.len(), got: keypoint_pred.len() });
    }
    if mask_pred.len() != mask_truth.len() {
        return Err(Error::Arity { expected: mask_truth.len(), got: mask_pred.len() });
    }
    if mask_pred.is_empty() {
        return Err(Error::Config("task mask is empty".into()));
    }
    let keypoint_errors = keypoint_pred.iter().zip(keypoint_truth).map(|(p, z)| p.map(|p| (p - z).abs())).collect();
    let scene_error =
        mask_pred.iter().zip(mask_truth).map(|(p, z)| (p - z).abs()).sum::<f64>() / mask_pred.len() as f64;
    Ok(FrameEvaluation { frame, keypoint_errors, scene_error })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    /// Aggregate over the frames where each keypoint was visible.
    pub per_keypoint: Vec<Option<f64>>,
    pub overall: f64,
}

fn aggregate(values: &mut [f64], stat: ErrorStatistic) -> f64 {
    match stat {
        ErrorStatistic::Mean => values.iter().sum::<f64>() / values.len() as f64,
        ErrorStatistic::Median => {
            values.sort_by(f64::total_cmp);
            let n = values.len();
            if n % 2 == 1 {
                values[n / 2]
            } else {
                0.5 * (values[n / 2 - 1] + values[n / 2])
            }
        }
    }
}

/// Aggregates per-frame evaluations over a trial.
pub fn evaluate_errors(frames: &[FrameEvaluation], stat: ErrorStatistic) -> Result<ErrorSummary> {
    if frames.is_empty() {
        return Err(Error::Config("no frames to evaluate".into()));
    }
    let m = frames[0].keypoint_errors.len();
    if frames.iter().any(|f| f.keypoint_errors.len() != m) {
        return Err(Error::Config("keypoint count changed between frames".into()));
    }
    let per_keypoint = (0..m)
        .map(|i| {
            let mut v: Vec<f64> = frames.iter().filter_map(|f| f.keypoint_errors[i]).collect();
            (!v.is_empty()).then(|| aggregate(&mut v, stat))
        })
        .collect();
    let mut scene: Vec<f64> = frames.iter().map(|f| f.scene_error).collect();
    Ok(ErrorSummary { per_keypoint, overall: aggregate(&mut scene, stat) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_scores_zero() {
        let f = evaluate_frame(0, &[Some(1.0), Some(2.0)], &[1.0, 2.0], &[1.5, 3.0], &[1.5, 3.0]).unwrap();
        let s = evaluate_errors(&[f], ErrorStatistic::Mean).unwrap();
        assert_eq!(s.per_keypoint, vec![Some(0.0), Some(0.0)]);
        assert_eq!(s.overall, 0.0);
    }

    #[test]
    fn constant_bias_passes_through() {
        let b = -0.07;
        let truth = [1.2, 1.9, 2.4];
        let pred: Vec<f64> = truth.iter().map(|z| z + b).collect();
        let kp: Vec<Option<f64>> = pred.iter().copied().map(Some).collect();
        let frames: Vec<_> = (0..4).map(|t| evaluate_frame(t, &kp, &truth, &pred, &truth).unwrap()).collect();
        for stat in [ErrorStatistic::Mean, ErrorStatistic::Median] {
            let s = evaluate_errors(&frames, stat).unwrap();
            assert!((s.overall - b.abs()).abs() < 1e-15);
            assert!(s.per_keypoint.iter().all(|e| (e.unwrap() - b.abs()).abs() < 1e-15));
        }
    }

    #[test]
    fn two_frame_toy_case() {
        // Frame 0: keypoint errors 0.1, 0.3; mask errors 0.2, 0.4 -> 0.3.
        // Frame 1: keypoint 0 hidden, keypoint 1 error 0.5; mask errors 0.0, 0.2 -> 0.1.
        let f0 = evaluate_frame(0, &[Some(1.1), Some(1.7)], &[1.0, 2.0], &[1.2, 2.6], &[1.0, 3.0]).unwrap();
        let f1 = evaluate_frame(1, &[None, Some(2.5)], &[1.0, 2.0], &[1.0, 3.2], &[1.0, 3.0]).unwrap();
        let s = evaluate_errors(&[f0, f1], ErrorStatistic::Mean).unwrap();
        assert!((s.per_keypoint[0].unwrap() - 0.1).abs() < 1e-12);
        assert!((s.per_keypoint[1].unwrap() - 0.4).abs() < 1e-12);
        assert!((s.overall - 0.2).abs() < 1e-12);
    }

    #[test]
    fn median_option() {
        let fs: Vec<_> = [0.1, 5.0, 0.2]
            .iter()
            .enumerate()
            .map(|(t, e)| evaluate_frame(t, &[], &[], &[1.0 + e], &[1.0]).unwrap())
            .collect();
        assert!((evaluate_errors(&fs, ErrorStatistic::Median).unwrap().overall - 0.2).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_is_config_error() {
        assert!(matches!(evaluate_frame(0, &[], &[], &[], &[]), Err(Error::Config(_))));
    }
}
