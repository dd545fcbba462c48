//! Long-format export of trial reports: one row per (series, frame, variable).

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::commands::{CliError, CliResult};

pub const HEADER: [&str; 8] = ["series", "label", "scene", "method", "seed", "frame", "variable", "value"];

/// Report CSV file and the series name it is exported under.
const SERIES: [(&str, &str); 3] =
    [("beta.csv", "beta"), ("frame_errors.csv", "error"), ("end_effector.csv", "end_effector")];

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::usage(format!("{}: {e}", path.display()))
}

/// Report directories under the given paths, in a stable order.
pub fn find_reports(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut found = Vec::new();
    for p in paths {
        if !p.is_dir() {
            return Err(CliError::usage(format!("{}: not a directory", p.display())));
        }
        if p.join("summary.csv").is_file() {
            found.push(p.clone());
            continue;
        }
        let mut subdirs: Vec<PathBuf> = std::fs::read_dir(p)
            .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| d.join("summary.csv").is_file())
            .collect();
        subdirs.sort();
        found.extend(subdirs);
    }
    if found.is_empty() {
        return Err(CliError::usage("no trial reports found"));
    }
    Ok(found)
}

struct Identity {
    scene: String,
    method: String,
    seed: String,
}

fn read_identity(dir: &Path) -> Result<Identity, CliError> {
    let path = dir.join("summary.csv");
    let mut rdr = csv::Reader::from_path(&path).map_err(csv_err(&path))?;
    let headers = rdr.headers().map_err(csv_err(&path))?.clone();
    let row = rdr
        .records()
        .next()
        .ok_or_else(|| CliError::usage(format!("{}: empty summary", path.display())))?
        .map_err(csv_err(&path))?;
    let field = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .and_then(|i| row.get(i))
            .map(str::to_string)
            .ok_or_else(|| CliError::usage(format!("{}: missing column `{name}`", path.display())))
    };
    Ok(Identity { scene: field("scene")?, method: field("method")?, seed: field("seed")? })
}

fn export_report<W: Write>(dir: &Path, w: &mut csv::Writer<W>) -> Result<(), CliError> {
    let id = read_identity(dir)?;
    let label = format!("{}/{}/seed{}", id.scene, id.method, id.seed);
    for (file, series) in SERIES {
        let path = dir.join(file);
        if !path.is_file() {
            continue;
        }
        let mut rdr = csv::Reader::from_path(&path).map_err(csv_err(&path))?;
        let headers = rdr.headers().map_err(csv_err(&path))?.clone();
        for row in rdr.records() {
            let row = row.map_err(csv_err(&path))?;
            let frame = &row[0];
            for (name, value) in headers.iter().zip(row.iter()).skip(1) {
                if value.is_empty() {
                    continue;
                }
                w.write_record([series, &label, &id.scene, &id.method, &id.seed, frame, name, value])
                    .map_err(csv_err(&path))?;
            }
        }
    }
    Ok(())
}

pub fn run(paths: &[PathBuf], out: Option<&Path>) -> CliResult {
    let reports = find_reports(paths)?;
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(HEADER).map_err(|e| CliError::usage(e.to_string()))?;
    for dir in &reports {
        export_report(dir, &mut w)?;
    }
    w.flush().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(0)
}
