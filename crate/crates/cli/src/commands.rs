use std::fs::File;
use std::path::{Path, PathBuf};

use depthcal::estimation::Method;
use depthcal::regressor::{fit_family, DepthPairSet, FamilyFit, FamilyKind};
use depthcal::simulator::{
    check_ordering, collect_fit_pairs, load_suite, run_benchmark_suite, run_trial, PairMode, RunManifest, SceneConfig,
};

pub const EXIT_FAILED_CHECK: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_TRIAL: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<depthcal::Error> for CliError {
    fn from(e: depthcal::Error) -> Self {
        Self::usage(e.to_string())
    }
}

pub type CliResult = Result<u8, CliError>;

/// Paths relative to `base`, so manifests do not depend on where the tool ran.
fn relative_to(base: &Path, paths: Vec<PathBuf>) -> Vec<PathBuf> {
    paths.into_iter().map(|p| p.strip_prefix(base).map(Path::to_path_buf).unwrap_or(p)).collect()
}

pub fn run(scene_path: &Path, method: &str, seed: Option<u64>, control: bool, out: &Path) -> CliResult {
    let mut scene = SceneConfig::load(scene_path)?;
    if let Some(seed) = seed {
        scene.seed = seed;
    }
    let method: Method = method.parse()?;
    let report = run_trial(&scene, method, control)?;
    let outputs = relative_to(out, report.write_dir(out)?);
    RunManifest::new(&scene, vec![scene.seed], vec![method], outputs)?.save(&out.join("manifest.json"))?;

    println!(
        "{} {} seed {}: {} frames, overall error {:.4} m",
        scene.name, method, scene.seed, report.frames_run, report.overall_error
    );
    if let (Some(ok), Some(d)) = (report.success, report.final_distance) {
        println!("reach: {} (final distance {d:.4} m)", if ok { "success" } else { "miss" });
    }
    if let Some(f) = &report.failure {
        eprintln!("trial failed: {f}");
        return Ok(EXIT_TRIAL);
    }
    Ok(0)
}

pub fn suite(path: &Path, jobs: usize, assert_ordering: bool, out: &Path) -> CliResult {
    let suite = load_suite(path)?;
    let result = run_benchmark_suite(&suite, jobs)?;
    let outputs = relative_to(out, result.write_tables(out)?);
    RunManifest::new(&suite, suite.seeds(), suite.config.methods.clone(), outputs)?.save(&out.join("manifest.json"))?;

    println!("{:<20} {:<18} {:>7} {:>10} {:>10}", "scene", "method", "trials", "mean", "std");
    for row in &result.errors {
        println!(
            "{:<20} {:<18} {:>7} {:>10.4} {:>10.4}",
            row.scene,
            row.method.to_string(),
            row.trials,
            row.overall_mean,
            row.overall_std
        );
    }
    if result.control {
        for row in &result.successes {
            println!("{:<20} {:<18} success {}/{}", row.scene, row.method.to_string(), row.successes, row.trials);
        }
    }
    for (cell, msg) in result.failures() {
        eprintln!("cell scene {} {} seed {} failed: {msg}", cell.scene, cell.method, cell.seed);
    }
    if result.all_failed() {
        eprintln!("every cell failed");
        return Ok(EXIT_TRIAL);
    }
    if assert_ordering {
        let violations = check_ordering(&result);
        for v in &violations {
            eprintln!("ordering violated in {}: {}", v.scene, v.detail);
        }
        if !violations.is_empty() {
            return Ok(EXIT_FAILED_CHECK);
        }
    }
    Ok(0)
}

pub fn fitbench(path: &Path, families: &[String], out: Option<&Path>) -> CliResult {
    let file = File::open(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let data = DepthPairSet::read_csv(file)?;
    if data.len() < 3 {
        return Err(CliError::usage(format!("insufficient data: {} pairs, need at least 3", data.len())));
    }
    let kinds: Vec<FamilyKind> = if families.is_empty() {
        FamilyKind::ALL.to_vec()
    } else {
        families.iter().map(|f| f.parse()).collect::<Result<_, _>>()?
    };

    let mut fits: Vec<FamilyFit> = Vec::new();
    for kind in kinds {
        match fit_family(kind, &data) {
            Ok(fit) => fits.push(fit),
            Err(e) => eprintln!("{kind}: not fitted ({e})"),
        }
    }
    if fits.is_empty() {
        return Err(CliError::usage("no family could be fitted"));
    }
    fits.sort_by(|a, b| a.fit_percentage.total_cmp(&b.fit_percentage));
    let n = fits.len();

    println!("{:<5} {:<14} {:>8}", "rank", "family", "fit");
    for (i, f) in fits.iter().enumerate() {
        println!("{:<5} {:<14} {:>7.2}%", n - i, f.family.kind.name(), f.fit_percentage);
    }
    if let Some(out) = out {
        let mut w = csv::Writer::from_path(out).map_err(|e| CliError::usage(e.to_string()))?;
        let mut write = |rec: &[String]| w.write_record(rec).map_err(|e| CliError::usage(e.to_string()));
        write(&["rank".into(), "family".into(), "fit_percentage".into(), "params".into()])?;
        for (i, f) in fits.iter().enumerate() {
            let params: Vec<String> = f.family.params.iter().map(|p| p.to_string()).collect();
            write(&[(n - i).to_string(), f.family.kind.name().into(), f.fit_percentage.to_string(), params.join(" ")])?;
        }
        w.flush().map_err(|e| CliError::usage(e.to_string()))?;
    }
    Ok(0)
}

pub fn pairs(scene_path: &Path, frame: Option<usize>, out: &Path) -> CliResult {
    let scene = SceneConfig::load(scene_path)?;
    let mode = frame.map_or(PairMode::Pooled, PairMode::Frame);
    let data = collect_fit_pairs(&scene, mode)?;
    let file = File::create(out).map_err(|e| CliError::usage(format!("{}: {e}", out.display())))?;
    data.write_csv(std::io::BufWriter::new(file))?;
    println!("{} pairs written to {}", data.len(), out.display());
    Ok(0)
}
