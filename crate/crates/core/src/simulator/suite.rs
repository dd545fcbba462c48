use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::trial::write_rows;
use super::{load_config, run_trial, SceneConfig, TrialReport};
use crate::error::{Error, Result};
use crate::estimation::Method;
use crate::parallel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub name: String,
    /// Scene files, relative to the suite file.
    pub scenes: Vec<PathBuf>,
    pub methods: Vec<Method>,
    /// Explicit seeds; when empty, `0..seed_count`.
    pub seeds: Vec<u64>,
    pub seed_count: u64,
    pub control: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            name: "suite".into(),
            scenes: Vec::new(),
            methods: vec![Method::Kf, Method::Lstm, Method::Hybrid, Method::StaticScale],
            seeds: Vec::new(),
            seed_count: 25,
            control: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadedSuite {
    pub config: SuiteConfig,
    pub scenes: Vec<SceneConfig>,
}

impl LoadedSuite {
    pub fn new(config: SuiteConfig, scenes: Vec<SceneConfig>) -> Result<Self> {
        if scenes.is_empty() {
            return Err(Error::Config("suite lists no scenes".into()));
        }
        if config.methods.is_empty() {
            return Err(Error::Config("suite lists no methods".into()));
        }
        let suite = Self { config, scenes };
        if suite.seeds().is_empty() {
            return Err(Error::Config("suite has no seeds".into()));
        }
        for s in &suite.scenes {
            s.validate().map_err(|e| Error::Config(format!("scene `{}`: {e}", s.name)))?;
        }
        Ok(suite)
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.config.seeds.is_empty() {
            (0..self.config.seed_count).collect()
        } else {
            self.config.seeds.clone()
        }
    }

    /// Every (scene, method, seed) combination, scene-major.
    pub fn cells(&self) -> Vec<SuiteCell> {
        let seeds = self.seeds();
        let mut out = Vec::new();
        for scene in 0..self.scenes.len() {
            for &method in &self.config.methods {
                for &seed in &seeds {
                    out.push(SuiteCell { scene, method, seed });
                }
            }
        }
        out
    }
}

pub fn load_suite(path: &Path) -> Result<LoadedSuite> {
    let config: SuiteConfig = load_config(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let scenes = config.scenes.iter().map(|p| SceneConfig::load(&base.join(p))).collect::<Result<Vec<_>>>()?;
    LoadedSuite::new(config, scenes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteCell {
    pub scene: usize,
    pub method: Method,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub cell: SuiteCell,
    pub scene: String,
    /// `Err` when the trial could not start; a report may still carry a failure.
    pub report: std::result::Result<TrialReport, String>,
}

impl CellOutcome {
    pub fn ok_report(&self) -> Option<&TrialReport> {
        self.report.as_ref().ok().filter(|r| !r.failed())
    }

    fn failure(&self) -> Option<String> {
        match &self.report {
            Err(e) => Some(e.clone()),
            Ok(r) => r.failure.clone(),
        }
    }
}

/// Runs cells with at most `jobs` concurrent trials (0 = pool default).
pub fn run_cells(scenes: &[SceneConfig], cells: &[SuiteCell], control: bool, jobs: usize) -> Result<Vec<CellOutcome>> {
    parallel::map_with_jobs(cells, jobs, |cell| run_cell(scenes, cell, control))
}

/// Same as [`run_cells`] but always on the calling thread.
pub fn run_cells_sequential(scenes: &[SceneConfig], cells: &[SuiteCell], control: bool) -> Vec<CellOutcome> {
    parallel::map_sequential(cells, |cell| run_cell(scenes, cell, control))
}

fn run_cell(scenes: &[SceneConfig], cell: &SuiteCell, control: bool) -> CellOutcome {
    let mut scene = scenes[cell.scene].clone();
    scene.seed = cell.seed;
    let with_control = control && cell.method != Method::ExternalBaseline;
    CellOutcome {
        cell: *cell,
        scene: scene.name.clone(),
        report: run_trial(&scene, cell.method, with_control).map_err(|e| e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorTableRow {
    pub scene: String,
    pub method: Method,
    pub trials: usize,
    pub failed: usize,
    pub per_keypoint_mean: Vec<Option<f64>>,
    pub overall_mean: f64,
    pub overall_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessTableRow {
    pub scene: String,
    pub method: Method,
    pub successes: usize,
    pub trials: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub outcomes: Vec<CellOutcome>,
    pub errors: Vec<ErrorTableRow>,
    pub successes: Vec<SuccessTableRow>,
    pub control: bool,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, std)
}

impl SuiteResult {
    pub fn from_outcomes(suite: &LoadedSuite, outcomes: Vec<CellOutcome>) -> Self {
        let mut errors = Vec::new();
        let mut successes = Vec::new();
        for (si, scene) in suite.scenes.iter().enumerate() {
            for &method in &suite.config.methods {
                let group: Vec<&CellOutcome> =
                    outcomes.iter().filter(|o| o.cell.scene == si && o.cell.method == method).collect();
                let ok: Vec<&TrialReport> = group.iter().filter_map(|o| o.ok_report()).collect();
                let m = scene.robot.chain.keypoint_count();
                let per_keypoint_mean = (0..m)
                    .map(|i| {
                        let v: Vec<f64> = ok.iter().filter_map(|r| r.per_keypoint_error[i]).collect();
                        (!v.is_empty()).then(|| mean_std(&v).0)
                    })
                    .collect();
                let overall: Vec<f64> = ok.iter().map(|r| r.overall_error).collect();
                let (overall_mean, overall_std) = mean_std(&overall);
                errors.push(ErrorTableRow {
                    scene: scene.name.clone(),
                    method,
                    trials: group.len(),
                    failed: group.len() - ok.len(),
                    per_keypoint_mean,
                    overall_mean,
                    overall_std,
                });
                let wins = group.iter().filter(|o| matches!(&o.report, Ok(r) if r.success == Some(true))).count();
                successes.push(SuccessTableRow {
                    scene: scene.name.clone(),
                    method,
                    successes: wins,
                    trials: group.len(),
                    rate: if group.is_empty() { 0.0 } else { wins as f64 / group.len() as f64 },
                });
            }
        }
        Self { outcomes, errors, successes, control: suite.config.control }
    }

    pub fn all_failed(&self) -> bool {
        self.outcomes.iter().all(|o| o.ok_report().is_none())
    }

    pub fn failures(&self) -> Vec<(SuiteCell, String)> {
        self.outcomes.iter().filter_map(|o| o.failure().map(|f| (o.cell, f))).collect()
    }

    /// Writes `errors.csv`, `cells.csv` and, for control suites, `success.csv`.
    pub fn write_tables(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        let m = self.errors.iter().map(|r| r.per_keypoint_mean.len()).max().unwrap_or(0);

        let path = dir.join("errors.csv");
        let mut header: Vec<String> = ["scene", "method", "trials", "failed"].map(String::from).to_vec();
        header.extend((0..m).map(|i| format!("keypoint{i}")));
        header.extend(["overall_mean".into(), "overall_std".into()]);
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_rows(
            &path,
            &header,
            self.errors.iter().map(|r| {
                let mut row = vec![r.scene.clone(), r.method.to_string(), r.trials.to_string(), r.failed.to_string()];
                row.extend(
                    (0..m).map(|i| {
                        r.per_keypoint_mean.get(i).copied().flatten().map(|v| v.to_string()).unwrap_or_default()
                    }),
                );
                row.push(r.overall_mean.to_string());
                row.push(r.overall_std.to_string());
                row
            }),
        )?;
        out.push(path);

        if self.control {
            let path = dir.join("success.csv");
            write_rows(
                &path,
                &["scene", "method", "successes", "trials", "rate"],
                self.successes.iter().map(|r| {
                    vec![
                        r.scene.clone(),
                        r.method.to_string(),
                        r.successes.to_string(),
                        r.trials.to_string(),
                        r.rate.to_string(),
                    ]
                }),
            )?;
            out.push(path);
        }

        let path = dir.join("cells.csv");
        write_rows(
            &path,
            &["scene", "method", "seed", "overall_error", "success", "final_distance", "failure"],
            self.outcomes.iter().map(|o| {
                let (err, success, dist) = match &o.report {
                    Ok(r) => (
                        r.overall_error.to_string(),
                        r.success.map(|s| s.to_string()).unwrap_or_default(),
                        r.final_distance.map(|d| d.to_string()).unwrap_or_default(),
                    ),
                    Err(_) => Default::default(),
                };
                vec![
                    o.scene.clone(),
                    o.cell.method.to_string(),
                    o.cell.seed.to_string(),
                    err,
                    success,
                    dist,
                    o.failure().unwrap_or_default(),
                ]
            }),
        )?;
        out.push(path);
        Ok(out)
    }
}

/// Runs every cell of the suite. Cell failures are recorded, not raised.
pub fn run_benchmark_suite(suite: &LoadedSuite, jobs: usize) -> Result<SuiteResult> {
    let outcomes = run_cells(&suite.scenes, &suite.cells(), suite.config.control, jobs)?;
    Ok(SuiteResult::from_outcomes(suite, outcomes))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderingViolation {
    pub scene: String,
    pub detail: String,
}

/// Checks `hybrid <= kf <= static_scale` on mean overall error per scene, for
/// whichever of those methods the suite ran.
pub fn check_ordering(result: &SuiteResult) -> Vec<OrderingViolation> {
    let order = [Method::Hybrid, Method::Kf, Method::StaticScale];
    let mut scenes: Vec<&str> = result.errors.iter().map(|r| r.scene.as_str()).collect();
    scenes.dedup();
    let mut out = Vec::new();
    for scene in scenes {
        let means: Vec<(Method, f64)> = order
            .iter()
            .filter_map(|&m| {
                result.errors.iter().find(|r| r.scene == scene && r.method == m).map(|r| (m, r.overall_mean))
            })
            .collect();
        for w in means.windows(2) {
            let ((a, ea), (b, eb)) = (w[0], w[1]);
            if !(ea <= eb) {
                out.push(OrderingViolation { scene: scene.to_string(), detail: format!("{a} {ea} > {b} {eb}") });
            }
        }
    }
    out
}

/// Hex SHA-256 of the value's JSON encoding.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value).map_err(|e| Error::Config(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new<T: Serialize>(config: &T, seeds: Vec<u64>, methods: Vec<Method>, outputs: Vec<PathBuf>) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash(config)?,
            seeds,
            methods,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            outputs,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}
