use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{evaluate_errors, evaluate_frame, DepthImage, FrameEvaluation, SceneConfig, World};
use crate::control::{control_step, save_control_log, ControlLogRow, ControlState};
use crate::error::{Error, Result};
use crate::estimation::{EstimatorState, Method};
use crate::regressor::DepthRegressorParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaRecord {
    pub frame: usize,
    pub beta: DepthRegressorParams,
    /// Exact inverse of the frame's warp, when the warp has one.
    pub truth: Option<DepthRegressorParams>,
}

/// True end-effector and goal positions (camera frame) after frame `frame`'s action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndEffectorRecord {
    pub frame: usize,
    pub position: Vector3<f64>,
    pub goal: Vector3<f64>,
}

impl EndEffectorRecord {
    pub fn distance(&self) -> f64 {
        (self.position - self.goal).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub scene: String,
    pub method: Method,
    pub seed: u64,
    pub with_control: bool,
    pub frames_run: usize,
    pub per_keypoint_error: Vec<Option<f64>>,
    pub overall_error: f64,
    pub beta_trajectory: Vec<BetaRecord>,
    pub frame_errors: Vec<FrameEvaluation>,
    pub control_log: Vec<ControlLogRow>,
    pub end_effector: Vec<EndEffectorRecord>,
    pub success: Option<bool>,
    pub final_distance: Option<f64>,
    /// Set when the trial stopped early; everything above covers the frames run.
    pub failure: Option<String>,
}

impl TrialReport {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    /// Column `beta1` etc. of the estimate, in frame order.
    pub fn beta_series(&self, pick: impl Fn(&DepthRegressorParams) -> f64) -> Vec<f64> {
        self.beta_trajectory.iter().map(|b| pick(&b.beta)).collect()
    }

    /// Writes the report CSVs into `dir` and returns their paths.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        let m = self.per_keypoint_error.len();

        let path = dir.join("summary.csv");
        write_rows(
            &path,
            &["scene", "method", "seed", "control", "frames", "overall_error", "success", "final_distance", "failure"],
            [vec![
                self.scene.clone(),
                self.method.to_string(),
                self.seed.to_string(),
                self.with_control.to_string(),
                self.frames_run.to_string(),
                self.overall_error.to_string(),
                opt(self.success),
                opt(self.final_distance),
                self.failure.clone().unwrap_or_default(),
            ]],
        )?;
        out.push(path);

        let path = dir.join("keypoint_errors.csv");
        write_rows(
            &path,
            &["keypoint", "error"],
            self.per_keypoint_error.iter().enumerate().map(|(i, e)| vec![i.to_string(), opt(*e)]),
        )?;
        out.push(path);

        let path = dir.join("beta.csv");
        write_rows(
            &path,
            &["frame", "beta2", "beta1", "beta0", "true_beta2", "true_beta1", "true_beta0"],
            self.beta_trajectory.iter().map(|b| {
                let t = b.truth.map(|t| t.to_vector());
                let mut row = vec![
                    b.frame.to_string(),
                    b.beta.beta2.to_string(),
                    b.beta.beta1.to_string(),
                    b.beta.beta0.to_string(),
                ];
                row.extend((0..3).map(|k| opt(t.map(|t| t[k]))));
                row
            }),
        )?;
        out.push(path);

        let path = dir.join("frame_errors.csv");
        let mut header = vec!["frame".to_string(), "scene_error".to_string()];
        header.extend((0..m).map(|i| format!("keypoint{i}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_rows(
            &path,
            &header,
            self.frame_errors.iter().map(|f| {
                let mut row = vec![f.frame.to_string(), f.scene_error.to_string()];
                row.extend(f.keypoint_errors.iter().map(|e| opt(*e)));
                row
            }),
        )?;
        out.push(path);

        if self.with_control {
            let path = dir.join("control.csv");
            save_control_log(&path, &self.control_log)?;
            out.push(path);
            let path = dir.join("end_effector.csv");
            write_rows(
                &path,
                &["frame", "x0", "x1", "x2", "g0", "g1", "g2", "distance"],
                self.end_effector.iter().map(|e| {
                    let mut row = vec![e.frame.to_string()];
                    row.extend(e.position.iter().chain(e.goal.iter()).map(|v| v.to_string()));
                    row.push(e.distance().to_string());
                    row
                }),
            )?;
            out.push(path);
        }
        Ok(out)
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub(crate) fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[allow(clippy::large_enum_variant)]
enum Predictor {
    Estimator(EstimatorState),
    Recorded(PathBuf),
}

/// Runs one trial: per frame, read relative depth at the tracked keypoints,
/// update the selected estimator with the kinematic observations, score the
/// regressed depth, and optionally take one control action.
///
/// Configuration problems are errors. Anything that goes wrong once frames
/// are running stops the trial and is reported in [`TrialReport::failure`].
pub fn run_trial(scene: &SceneConfig, method: Method, with_control: bool) -> Result<TrialReport> {
    let world = World::new(scene)?;
    let camera = *world.camera();
    let m = scene.robot.chain.keypoint_count();
    let ee = m - 1;

    let mut predictor = match method {
        Method::ExternalBaseline => {
            if with_control {
                return Err(Error::Config("external_baseline cannot drive the controller".into()));
            }
            let dir = scene
                .external_baseline_dir
                .clone()
                .ok_or_else(|| Error::Config("external_baseline needs external_baseline_dir".into()))?;
            Predictor::Recorded(dir)
        }
        _ => {
            let mut cfg = scene.estimator;
            cfg.training.seed ^= scene.seed;
            Predictor::Estimator(EstimatorState::new(method, m, &cfg)?)
        }
    };

    let mut ctrl = if with_control { Some(ControlState::new(&scene.control)?) } else { None };
    let goal_pixel: Vector2<f64> = scene.control.goal_pixel;
    let goal_true = camera.backproject(&goal_pixel, world.background_depth(&goal_pixel))?;
    let mut ee_true = world.frame(0)?.keypoints_camera[ee];

    let mut report = TrialReport {
        scene: scene.name.clone(),
        method,
        seed: scene.seed,
        with_control,
        frames_run: 0,
        per_keypoint_error: vec![None; m],
        overall_error: 0.0,
        beta_trajectory: Vec::new(),
        frame_errors: Vec::new(),
        control_log: Vec::new(),
        end_effector: Vec::new(),
        success: None,
        final_distance: None,
        failure: None,
    };

    for t in 0..scene.frames {
        match run_frame(&world, t, &mut predictor, ctrl.as_mut(), &mut ee_true, goal_true, &mut report) {
            Ok(()) => report.frames_run = t + 1,
            Err(e) => {
                report.failure = Some(format!("frame {t}: {e}"));
                break;
            }
        }
    }

    if !report.frame_errors.is_empty() {
        let summary = evaluate_errors(&report.frame_errors, scene.statistic)?;
        report.per_keypoint_error = summary.per_keypoint;
        report.overall_error = summary.overall;
    } else {
        report.overall_error = f64::NAN;
    }
    if with_control {
        let d = (ee_true - goal_true).norm();
        report.final_distance = Some(d);
        report.success = Some(report.failure.is_none() && d <= scene.control.success_epsilon);
    }
    Ok(report)
}

fn run_frame(
    world: &World,
    t: usize,
    predictor: &mut Predictor,
    ctrl: Option<&mut ControlState>,
    ee_true: &mut Vector3<f64>,
    goal_true: Vector3<f64>,
    report: &mut TrialReport,
) -> Result<()> {
    let scene = world.scene();
    let frame = world.frame_with_end_effector(t, ctrl.is_some().then_some(*ee_true))?;
    let obs = &frame.observations;

    // Metric prediction at a pixel from whichever source this method uses.
    let (beta, recorded) = match predictor {
        Predictor::Estimator(state) => {
            let rel = frame.tracked_relative();
            let beta = state.step(&rel, obs)?;
            report.beta_trajectory.push(BetaRecord { frame: t, beta, truth: frame.warp.matched_regressor() });
            (Some(beta), None)
        }
        Predictor::Recorded(dir) => (None, Some(DepthImage::load(&DepthImage::frame_path(dir, t))?)),
    };
    let predict = |p: &Vector2<f64>| match (&beta, &recorded) {
        (Some(b), _) => b.apply(frame.relative_at(p)),
        (None, Some(img)) => img.sample(p),
        (None, None) => unreachable!(),
    };

    let kp_pred: Vec<Option<f64>> = (0..obs.len()).map(|i| obs.visible[i].then(|| predict(&obs.pixels[i]))).collect();
    let kp_truth: Vec<f64> =
        (0..obs.len()).map(|i| if obs.visible[i] { frame.depth_gt(&obs.pixels[i]) } else { 0.0 }).collect();
    let mask = world.mask_pixels();
    let mask_pred: Vec<f64> = mask.iter().map(predict).collect();
    let mask_truth: Vec<f64> = mask.iter().map(|p| frame.depth_gt(p)).collect();
    report.frame_errors.push(evaluate_frame(t, &kp_pred, &kp_truth, &mask_pred, &mask_truth)?);

    if let (Some(ctrl), Some(beta)) = (ctrl, beta) {
        let ee = obs.len() - 1;
        let goal_pixel = scene.control.goal_pixel;
        let rel_goal = Some(frame.background_relative_at(&goal_pixel));
        let rel_ee = obs.visible[ee].then(|| frame.relative_at(&obs.pixels[ee]));
        let u = control_step(ctrl, &scene.control, world.camera(), &beta, rel_goal, rel_ee, &obs.pixels[ee]);
        *ee_true += u;
        report.control_log.push(ControlLogRow::from_state(t, ctrl));
        report.end_effector.push(EndEffectorRecord { frame: t, position: *ee_true, goal: goal_true });
    }
    Ok(())
}
