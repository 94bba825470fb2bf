//! Artifact writers: traces, diagnostics tables, and the run manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use repcn_core::diagnostics::{AcfSeries, DensityEstimate, FieldMoments, KdeGrid};
use repcn_core::{SamplerTrace, SeedStreams, StructuredGrid};

use crate::config::RunConfig;

pub const TRACE_FILE: &str = "trace.csv";
pub const ACF_FILE: &str = "acf.csv";
pub const ESS_FILE: &str = "ess.csv";
pub const KDE_FILE: &str = "kde_grid.csv";
pub const MOMENTS_FILE: &str = "field_moments.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FIXTURE_FILE: &str = "problem.json";
pub const BASIS_FILE: &str = "kl_basis.txt";
pub const VERIFY_FILE: &str = "verify.json";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

/// Rows `iter, chain, xi_0.., energy, swapped`, interleaving chains per
/// iteration. Floats use the shortest representation that round-trips.
pub fn write_trace(path: &Path, traces: &[&SamplerTrace]) -> Result<()> {
    let Some(first) = traces.first() else {
        bail!("no traces to write");
    };
    let dim = first.dim;
    let mut w = csv_writer(path)?;
    let mut header = vec!["iter".to_string(), "chain".to_string()];
    header.extend((0..dim).map(|j| format!("xi_{j}")));
    header.extend(["energy".to_string(), "swapped".to_string()]);
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(dim + 4);
    for i in 0..first.len() {
        for t in traces {
            row.clear();
            row.push(i.to_string());
            row.push(t.chain.to_string());
            row.extend(t.position(i).iter().map(|x| x.to_string()));
            row.push(t.energies[i].to_string());
            row.push(u8::from(t.swapped[i]).to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace`], one entry per chain in order of
/// first appearance.
pub fn read_trace(path: &Path) -> Result<Vec<SamplerTrace>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header = r.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    let n = names.len();
    if n < 5 || names[0] != "iter" || names[1] != "chain" || names[n - 2] != "energy" || names[n - 1] != "swapped" {
        bail!("{}: header must be iter,chain,xi_0..,energy,swapped", path.display());
    }
    let dim = n - 4;
    let mut traces: Vec<SamplerTrace> = Vec::new();
    let mut pos = vec![0.0; dim];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<f64> {
            rec[k]
                .parse()
                .with_context(|| format!("row {}: column {} is not a number", line + 2, names[k]))
        };
        let chain: usize = rec[1].parse().with_context(|| format!("row {}: bad chain", line + 2))?;
        for (j, p) in pos.iter_mut().enumerate() {
            *p = field(2 + j)?;
        }
        let energy = field(n - 2)?;
        let swapped = match &rec[n - 1] {
            "0" => false,
            "1" => true,
            other => bail!("row {}: swapped must be 0 or 1, got {other:?}", line + 2),
        };
        let t = match traces.iter_mut().position(|t| t.chain == chain) {
            Some(k) => &mut traces[k],
            None => {
                traces.push(SamplerTrace::new(chain, dim, 0));
                traces.last_mut().expect("just pushed")
            }
        };
        t.push(&pos, energy, swapped);
        if swapped {
            t.swap_accepts += 1;
        }
    }
    if traces.is_empty() {
        bail!("{}: trace has no rows", path.display());
    }
    Ok(traces)
}

/// Columns `lag, <series names..>`.
pub fn write_acf(path: &Path, names: &[String], series: &[AcfSeries]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["lag".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    let lags = series.iter().map(|s| s.values.len()).min().unwrap_or(0);
    for k in 0..lags {
        let mut row = vec![k.to_string()];
        row.extend(series.iter().map(|s| s.values[k].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssRow {
    pub chain: usize,
    pub series: String,
    pub ess: f64,
    pub rho: f64,
    pub iat: f64,
    pub samples: usize,
}

pub fn write_ess(path: &Path, rows: &[EssRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// 1D: `x, density`; 2D: `x, y, density` with `y` fastest.
pub fn write_kde(path: &Path, estimate: &DensityEstimate) -> Result<()> {
    let mut w = csv_writer(path)?;
    match &estimate.grid {
        KdeGrid::OneD(x) => {
            w.write_record(["x", "density"])?;
            for (a, d) in x.iter().zip(&estimate.density) {
                w.write_record([a.to_string(), d.to_string()])?;
            }
        }
        KdeGrid::TwoD(x, y) => {
            w.write_record(["x", "y", "density"])?;
            for (i, a) in x.iter().enumerate() {
                for (j, b) in y.iter().enumerate() {
                    w.write_record([a.to_string(), b.to_string(), estimate.density[i * y.len() + j].to_string()])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per KL grid point.
pub fn write_field_moments(path: &Path, grid: StructuredGrid, m: &FieldMoments) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["x", "y", "mean", "std", "skewness", "zero_variance"])?;
    for (k, p) in grid.points().iter().enumerate() {
        w.write_record([
            p[0].to_string(),
            p[1].to_string(),
            m.mean[k].to_string(),
            m.std[k].to_string(),
            m.skewness[k].to_string(),
            u8::from(m.zero_variance[k]).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

/// Record sufficient to reproduce a run: the resolved configuration, the
/// derived seeds, and digests of every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: RunStatus,
    pub version: String,
    pub config: RunConfig,
    /// TOML text the configuration was read from, when there was one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_source: Option<String>,
    pub seeds: SeedStreams,
    pub started_unix: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_secs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_sha256: Option<String>,
    /// Artifact file name → sha256.
    pub artifacts: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    /// Hashes each artifact present in `dir`.
    pub fn record_artifacts(&mut self, dir: &Path, names: &[&str]) -> Result<()> {
        for name in names {
            let p: PathBuf = dir.join(name);
            if p.exists() {
                let digest = sha256_file(&p)?;
                if *name == FIXTURE_FILE {
                    self.fixture_sha256 = Some(digest.clone());
                }
                self.artifacts.insert((*name).to_string(), digest);
            }
        }
        Ok(())
    }
}
