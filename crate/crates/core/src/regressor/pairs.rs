use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative/metric depth correspondences used for batch fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthPairSet {
    pairs: Vec<(f64, f64)>,
}

impl DepthPairSet {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Domain("depth pair set is empty".into()));
        }
        for (i, &(r, z)) in pairs.iter().enumerate() {
            if !r.is_finite() {
                return Err(Error::Domain(format!("pair {i}: relative depth {r} is not finite")));
            }
            if !(z.is_finite() && z > 0.0) {
                return Err(Error::Domain(format!("pair {i}: metric depth {z} must be positive")));
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn relative(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.0)
    }

    pub fn metric(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.1)
    }

    /// Reads a `r,z` CSV. Line numbers in errors are 1-based and count the header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
        if headers.len() != 2 || &headers[0] != "r" || &headers[1] != "z" {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `r,z`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut pairs = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Parse {
                line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
            if record.len() != 2 {
                return Err(Error::Parse { line, message: format!("expected 2 fields, found {}", record.len()) });
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse { line, message: format!("`{s}`: {e}") });
            pairs.push((parse(&record[0])?, parse(&record[1])?));
        }
        if pairs.is_empty() {
            return Err(Error::Parse { line: 2, message: "no data rows".into() });
        }
        Self::new(pairs)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["r", "z"]).map_err(io)?;
        for &(r, z) in &self.pairs {
            w.write_record([r.to_string(), z.to_string()]).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}
