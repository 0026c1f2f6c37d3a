use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::metrics::MetricsReport;
use crate::Result;

/// A named CSV table with a fixed header.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ReportTable {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for r in &self.rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(name: &str, r: impl Read) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.iter().map(str::to_string).collect();
        let rows = rd.records().map(|r| r.map(|r| r.iter().map(str::to_string).collect())).collect::<std::result::Result<_, _>>()?;
        Ok(Self { name: name.to_string(), header, rows })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long-format metrics: one row per (experiment point, parameter) and one
/// `mean` row per point. Undefined R² is an empty cell.
pub fn metrics_table(name: &str, reports: &[MetricsReport]) -> ReportTable {
    let mut t = ReportTable::new(name, &["point", "parameter", "rmse", "r2", "ci_lo", "ci_hi"]);
    for r in reports {
        for p in &r.params {
            t.push(vec![r.label.clone(), p.name.clone(), p.rmse.to_string(), opt(p.r2), String::new(), String::new()]);
        }
        let (lo, hi) = r.ci.map_or((None, None), |(a, b)| (Some(a), Some(b)));
        t.push(vec![r.label.clone(), "mean".into(), String::new(), opt(r.mean_r2), opt(lo), opt(hi)]);
    }
    t
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Everything needed to rerun a command.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub seeds: Vec<u64>,
    /// `(path, sha256)` of every input dataset.
    pub datasets: Vec<(String, String)>,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: Vec::new(),
            datasets: Vec::new(),
            config,
        }
    }

    pub fn with_dataset(mut self, path: &Path) -> Result<Self> {
        self.datasets.push((path.display().to_string(), sha256_file(path)?));
        Ok(self)
    }

    pub fn render(&self) -> Result<String> {
        let mut s = format!("command: {}\ncode_version: {}\n", self.command, self.code_version);
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        s.push_str(&format!("seeds: {}\n", seeds.join(",")));
        for (p, h) in &self.datasets {
            s.push_str(&format!("dataset: {p} sha256={h}\n"));
        }
        s.push_str("config:\n");
        s.push_str(&serde_json::to_string_pretty(&self.config)?);
        s.push('\n');
        Ok(s)
    }
}

/// Write each table as `<dir>/<name>.csv` plus `<dir>/manifest.txt`.
pub fn emit_report(dir: &Path, tables: &[ReportTable], manifest: &RunManifest) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(tables.len() + 1);
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        t.write_csv(std::fs::File::create(&path)?)?;
        written.push(path);
    }
    let path = dir.join("manifest.txt");
    std::fs::write(&path, manifest.render()?)?;
    written.push(path);
    Ok(written)
}
