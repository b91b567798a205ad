//! Run artifacts: CSV time series, structured-text reports, and a
//! manifest with a content hash for every emitted file.
//!
//! Numbers are written with shortest round-trip formatting, so reading a
//! CSV back reproduces the original values bit-exactly and repeated runs
//! with the same configuration and seed produce identical bytes.

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub struct ArtifactSink {
    dir: PathBuf,
    files: Vec<(String, String)>,
    config_echo: BTreeMap<String, String>,
    seed: u64,
}

impl ArtifactSink {
    pub fn create(dir: &Path, config_echo: BTreeMap<String, String>, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            config_echo,
            seed,
        })
    }

    fn record(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)
            .with_context(|| format!("cannot write {}", path.display()))?;
        let mut hasher = Sha256::new();
        hasher.update(contents.as_bytes());
        self.files
            .push((name.to_string(), hex::encode(hasher.finalize())));
        Ok(())
    }

    /// CSV with a header row; the first column is `t` by convention.
    pub fn write_timeseries(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let mut out = String::new();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in rows {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                first = false;
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
        self.record(name, &out)
    }

    /// Structured text report with stable key ordering.
    pub fn write_report(&mut self, name: &str, entries: &[(String, String)]) -> Result<()> {
        let mut out = String::new();
        for (k, v) in entries {
            writeln!(out, "{k} = {v}").unwrap();
        }
        self.record(name, &out)
    }

    /// Manifest: configuration echo, code version, timestamp, and the
    /// content hash of every emitted file.
    pub fn finalize(mut self) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "version = {}", env!("CARGO_PKG_VERSION")).unwrap();
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        writeln!(out, "timestamp_unix = {stamp}").unwrap();
        writeln!(out, "seed = {}", self.seed).unwrap();
        for (k, v) in &self.config_echo {
            writeln!(out, "config.{k} = {v}").unwrap();
        }
        self.files.sort();
        for (name, hash) in &self.files {
            writeln!(out, "file.{name}.sha256 = {hash}").unwrap();
        }
        let path = self.dir.join("manifest.txt");
        std::fs::write(&path, out)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}

/// Parse a CSV produced by [`ArtifactSink::write_timeseries`].
#[cfg(test)]
pub fn read_timeseries(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .unwrap_or("")
        .split(',')
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>> = line
            .split(',')
            .map(|f| f.parse::<f64>().context("bad float in CSV"))
            .collect();
        rows.push(row?);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join(format!("vpb-art-{}", std::process::id()));
        let mut sink = ArtifactSink::create(&dir, BTreeMap::new(), 0).unwrap();
        let rows = vec![
            vec![0.0, 1.0 / 3.0, -2.5e-17],
            vec![0.1, std::f64::consts::PI, 1e300],
        ];
        sink.write_timeseries("x.csv", &["t", "a", "b"], &rows).unwrap();
        sink.finalize().unwrap();
        let (header, back) = read_timeseries(&dir.join("x.csv")).unwrap();
        assert_eq!(header, vec!["t", "a", "b"]);
        for (r, b) in rows.iter().zip(&back) {
            for (x, y) in r.iter().zip(b) {
                assert!(x.to_bits() == y.to_bits());
            }
        }
        // Header-only CSV for an empty series.
        let mut sink = ArtifactSink::create(&dir, BTreeMap::new(), 0).unwrap();
        sink.write_timeseries("empty.csv", &["t", "v"], &[]).unwrap();
        sink.finalize().unwrap();
        let text = std::fs::read_to_string(dir.join("empty.csv")).unwrap();
        assert_eq!(text, "t,v\n");
        std::fs::remove_dir_all(&dir).ok();
    }
}
