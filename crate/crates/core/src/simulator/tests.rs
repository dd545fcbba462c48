use super::*;
use crate::estimation::Method;
use crate::regressor::{eval_regressor, DepthRegressorParams};

fn short(frames: usize) -> SceneConfig {
    SceneConfig { frames, ..SceneConfig::default() }
}

#[test]
fn default_arm_is_in_view() {
    let world = World::new(&short(200)).unwrap();
    for t in (0..200).step_by(7) {
        let f = world.frame(t).unwrap();
        assert_eq!(f.truth.visible_count(), 5, "frame {t}");
    }
    let (lo, hi) = world.static_depth_range();
    assert!(lo > 0.5 && hi < 6.0, "{lo} {hi}");
}

#[test]
fn identity_warp_gives_metric_depth() {
    let scene = SceneConfig { warp: WarpModel::Affine { a: 1.0, b: 0.0 }, ..short(3) }.noiseless();
    let world = World::new(&scene).unwrap();
    let f = world.frame(2).unwrap();
    for p in world.mask_pixels().iter().chain(f.truth.pixels.iter()) {
        assert_eq!(f.relative_at(p), f.depth_gt(p));
    }
}

#[test]
fn matched_regressor_inverts_rendered_warp() {
    let scene = short(5).noiseless();
    let world = World::new(&scene).unwrap();
    let beta = DepthRegressorParams::new(0.5, 1.2, 0.1);
    for t in 0..5 {
        let f = world.frame(t).unwrap();
        for p in &f.truth.pixels {
            let z = eval_regressor(&beta, f.relative_at(p)).unwrap();
            assert!((z - f.depth_gt(p)).abs() < 1e-9);
        }
    }
}

#[test]
fn kinematic_depth_matches_rendered_depth() {
    let scene = short(50).noiseless();
    let world = World::new(&scene).unwrap();
    for t in 0..50 {
        let f = world.frame(t).unwrap();
        for i in f.truth.visible_indices() {
            assert!((f.observations.depths[i] - f.depth_gt(&f.truth.pixels[i])).abs() < 1e-9);
        }
    }
}

#[test]
fn frames_are_deterministic() {
    let scene = short(10);
    let (a, b) = (World::new(&scene).unwrap(), World::new(&scene).unwrap());
    for t in 0..10 {
        let (fa, fb) = (a.frame(t).unwrap(), b.frame(t).unwrap());
        assert_eq!(fa.observations, fb.observations);
        assert_eq!(fa.warp, fb.warp);
        assert_eq!(fa.tracked_relative(), fb.tracked_relative());
    }
    let other = World::new(&SceneConfig { seed: 1, ..scene }).unwrap();
    assert_ne!(other.frame(3).unwrap().observations, a.frame(3).unwrap().observations);
}

#[test]
fn non_monotone_warp_is_config_error() {
    let scene = SceneConfig { warp: WarpModel::InverseQuadratic { beta: [-0.5, 1.0, 0.0] }, ..short(3) };
    assert!(matches!(World::new(&scene), Err(crate::Error::Config(_))));
}

#[test]
fn waypoint_trajectory_interpolates() {
    let scene = SceneConfig {
        trajectory: TrajectorySpec::Waypoints {
            points: vec![vec![0.0; 5], vec![0.2, 0.4, 0.6, 0.8, 1.0]],
            frames_per_segment: 4,
        },
        ..short(10)
    };
    let world = World::new(&scene).unwrap();
    assert_eq!(world.joint_angles(2), vec![0.1, 0.2, 0.3, 0.4, 0.5]);
    assert_eq!(world.joint_angles(9), vec![0.2, 0.4, 0.6, 0.8, 1.0]);
}

#[test]
fn kf_recovers_static_warp() {
    let scene = SceneConfig { frames: 300, ..SceneConfig::default() }.noiseless();
    let report = run_trial(&scene, Method::Kf, false).unwrap();
    assert!(report.failure.is_none());
    let last = report.beta_trajectory.last().unwrap();
    assert!(last.beta.max_abs_diff(&last.truth.unwrap()) <= 1e-3, "{:?}", last);
}

#[test]
fn static_scale_loses_to_kf_under_drift() {
    let scene = short(200);
    let kf = run_trial(&scene, Method::Kf, false).unwrap();
    let st = run_trial(&scene, Method::StaticScale, false).unwrap();
    assert!(st.overall_error > kf.overall_error, "static {} kf {}", st.overall_error, kf.overall_error);
}

#[test]
fn reports_are_byte_identical_on_rerun() {
    let scene = SceneConfig { frames: 30, ..SceneConfig::default() };
    let dir = tempfile::tempdir().unwrap();
    for method in [Method::Kf, Method::Hybrid] {
        let a = run_trial(&scene, method, true).unwrap().write_dir(&dir.path().join("a")).unwrap();
        let b = run_trial(&scene, method, true).unwrap().write_dir(&dir.path().join("b")).unwrap();
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap(), "{}", pa.display());
        }
    }
}

#[test]
fn external_baseline_scores_recorded_maps() {
    let dir = tempfile::tempdir().unwrap();
    let scene = SceneConfig { external_baseline_dir: Some(dir.path().into()), ..short(3) }.noiseless();
    let world = World::new(&scene).unwrap();
    for t in 0..3 {
        world.frame(t).unwrap().render_depth().save(&DepthImage::frame_path(dir.path(), t)).unwrap();
    }
    let report = run_trial(&scene, Method::ExternalBaseline, false).unwrap();
    assert!(report.failure.is_none());
    assert!(report.overall_error < 1e-12);

    // Biased maps score exactly the bias.
    for t in 0..3 {
        let mut img = world.frame(t).unwrap().render_depth();
        img.data.iter_mut().for_each(|z| *z += 0.05);
        img.save(&DepthImage::frame_path(dir.path(), t)).unwrap();
    }
    let report = run_trial(&scene, Method::ExternalBaseline, false).unwrap();
    assert!((report.overall_error - 0.05).abs() < 1e-9);

    std::fs::remove_file(DepthImage::frame_path(dir.path(), 2)).unwrap();
    let report = run_trial(&scene, Method::ExternalBaseline, false).unwrap();
    assert_eq!(report.frames_run, 2);
    assert!(report.failure.is_some());
    assert!(run_trial(&scene, Method::ExternalBaseline, true).is_err());
}

#[test]
fn noiseless_seeds_agree_without_randomized_trajectory() {
    let mut scene = short(40).noiseless();
    scene.trajectory = match scene.trajectory {
        TrajectorySpec::Sinusoidal { center, amplitude, period_frames, .. } => {
            TrajectorySpec::Sinusoidal { center, amplitude, period_frames, randomize: false }
        }
        t => t,
    };
    let suite = LoadedSuite::new(
        SuiteConfig { methods: vec![Method::Kf], seed_count: 25, ..SuiteConfig::default() },
        vec![scene],
    )
    .unwrap();
    let result = run_benchmark_suite(&suite, 0).unwrap();
    assert_eq!(result.errors.len(), 1);
    assert!(result.errors[0].overall_std <= 1e-6);
}

#[test]
fn single_cell_suite_writes_one_row() {
    let suite = LoadedSuite::new(
        SuiteConfig { methods: vec![Method::Kf], seeds: vec![3], ..SuiteConfig::default() },
        vec![short(10)],
    )
    .unwrap();
    let result = run_benchmark_suite(&suite, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = result.write_tables(dir.path()).unwrap();
    let text = std::fs::read_to_string(&paths[0]).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(check_ordering(&result).is_empty());
}

#[test]
fn parallel_and_sequential_cells_agree() {
    let suite = LoadedSuite::new(
        SuiteConfig { methods: vec![Method::Kf, Method::StaticScale], seed_count: 4, ..SuiteConfig::default() },
        vec![short(15)],
    )
    .unwrap();
    let cells = suite.cells();
    let par = run_cells(&suite.scenes, &cells, false, 0).unwrap();
    let seq = run_cells_sequential(&suite.scenes, &cells, false);
    assert_eq!(par, seq);
}

#[test]
fn empty_suite_is_rejected() {
    assert!(LoadedSuite::new(SuiteConfig::default(), vec![]).is_err());
}

#[test]
fn scene_config_round_trips_through_toml_and_json() {
    let scene = SceneConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let toml_path = dir.path().join("s.toml");
    std::fs::write(&toml_path, toml::to_string(&scene).unwrap()).unwrap();
    assert_eq!(SceneConfig::load(&toml_path).unwrap(), scene);
    let json_path = dir.path().join("s.json");
    std::fs::write(&json_path, serde_json::to_string(&scene).unwrap()).unwrap();
    assert_eq!(SceneConfig::load(&json_path).unwrap(), scene);
    // Partial configs fill in defaults.
    let partial = dir.path().join("p.toml");
    std::fs::write(&partial, "name = \"p\"\nframes = 12\n[warp]\nkind = \"disparity\"\na = 1.0\nb = 0.1\n").unwrap();
    let p = SceneConfig::load(&partial).unwrap();
    assert_eq!((p.frames, p.warp), (12, WarpModel::Disparity { a: 1.0, b: 0.1 }));
    assert!(SceneConfig::load(&dir.path().join("missing.toml")).is_err());
}

#[test]
fn config_hash_is_stable() {
    let a = config_hash(&SceneConfig::default()).unwrap();
    assert_eq!(a, config_hash(&SceneConfig::default()).unwrap());
    assert_eq!(a.len(), 64);
    assert_ne!(a, config_hash(&SceneConfig { seed: 1, ..SceneConfig::default() }).unwrap());
}

#[test]
fn fit_pairs_cover_the_mask() {
    let scene = short(4);
    let one = collect_fit_pairs(&scene, PairMode::Frame(0)).unwrap();
    let all = collect_fit_pairs(&scene, PairMode::Pooled).unwrap();
    assert_eq!(all.len(), 4 * one.len());
}

#[test]
fn control_trial_logs_every_frame() {
    let scene = short(40);
    let r = run_trial(&scene, Method::Kf, true).unwrap();
    assert_eq!(r.control_log.len(), 40);
    assert_eq!(r.end_effector.len(), 40);
    assert!(r.final_distance.is_some() && r.success.is_some());
}

#[test]
fn relative_noise_field_has_configured_spread() {
    let scene = short(3);
    let world = World::new(&scene).unwrap();
    let f = world.frame(1).unwrap();
    let e: Vec<f64> = world.mask_pixels().iter().map(|p| f.relative_noise(p)).collect();
    let rms = (e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt();
    assert!(rms > 0.3 * scene.noise.relative && rms < 3.0 * scene.noise.relative, "{rms}");
    assert_ne!(
        f.relative_noise(&world.mask_pixels()[0]),
        world.frame(2).unwrap().relative_noise(&world.mask_pixels()[0])
    );

    let quiet = World::new(&scene.noiseless()).unwrap();
    let f = quiet.frame(1).unwrap();
    assert!(quiet.mask_pixels().iter().all(|p| f.relative_noise(p) == 0.0));
}

#[test]
fn error_grows_with_observation_noise() {
    let mean_error = |std: f64| {
        let mut base = short(60).noiseless();
        base.noise.depth_m = std;
        (0..20u64)
            .map(|seed| run_trial(&SceneConfig { seed, ..base.clone() }, Method::Kf, false).unwrap().overall_error)
            .sum::<f64>()
            / 20.0
    };
    let errs: Vec<f64> = [0.0, 0.01, 0.03, 0.1].into_iter().map(mean_error).collect();
    assert!(errs.windows(2).all(|w| w[0] < w[1]), "{errs:?}");
}
