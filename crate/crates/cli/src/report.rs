//! Compression report files (JSON) and their CSV consolidation.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use catn_core::compressor::CompressionReport;

pub const REPORT_VERSION: u32 = 1;

/// One compression run: the hyper-parameters it was produced under plus the
/// per-layer accounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub version: u32,
    /// Path of the model that was compressed (provenance).
    pub model: String,
    pub tau: f64,
    pub lambda_first: f64,
    pub lambda_rest: f64,
    pub alpha: f64,
    pub energy: f64,
    pub report: CompressionReport,
}

impl ReportFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)
            .with_context(|| format!("cannot write report {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<ReportFile> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read report {}", path.display()))?;
        let file: ReportFile = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse report {}", path.display()))?;
        if file.version != REPORT_VERSION {
            bail!(
                "{}: report version {} does not match supported version {REPORT_VERSION}",
                path.display(),
                file.version
            );
        }
        Ok(file)
    }
}

/// Merge report files into one CSV: one row per (config, energy), sorted by
/// (tau, energy, source), with a provenance column. Columns are fixed.
pub fn consolidate_csv(paths: &[std::path::PathBuf]) -> Result<String> {
    let mut rows = Vec::new();
    for path in paths {
        let file = ReportFile::load(path)?;
        rows.push((path.display().to_string(), file));
    }
    rows.sort_by(|(sa, a), (sb, b)| {
        a.tau
            .partial_cmp(&b.tau)
            .unwrap()
            .then(a.energy.partial_cmp(&b.energy).unwrap())
            .then(sa.cmp(sb))
    });

    let mut out = String::from(
        "source,tau,lambda_first,lambda_rest,alpha,energy,params_before,params_after,\
         macs_before,macs_after,accuracy_before,accuracy_after\n",
    );
    for (source, file) in rows {
        let t = &file.report.totals;
        out.push_str(&format!(
            "{source},{},{},{},{},{},{},{},{},{},{},{}\n",
            file.tau,
            file.lambda_first,
            file.lambda_rest,
            file.alpha,
            file.energy,
            t.params_before,
            t.params_after,
            t.macs_before,
            t.macs_after,
            opt(file.report.accuracy_before),
            opt(file.report.accuracy_after),
        ));
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}
