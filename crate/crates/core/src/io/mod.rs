//! Configuration, run manifests and result files.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use config::{
    parse_config, parse_config_str, CorrectorConfig, HomogenizeConfig, Medium, ProbeConfig,
    QuantifyRunConfig, RunConfig, SampleGeometryConfig, VarianceScalingConfig,
};

use crate::elliptic::SolveStats;
use crate::error::Result;
use crate::field::CoefficientField;

pub const MANIFEST: &str = "manifest.json";

/// Modeling proxies every run relies on.
pub fn proxy_notes() -> Vec<String> {
    vec![
        "ergodic proxy: ensemble averages are taken over independent periodic boxes of side L".into(),
        "saturation proxy: random parking stops after rejection_factor * L^d consecutive rejections".into(),
        "sigma note: the flux corrector is built from the massive flux q_T (sigma_T), not the stationary flux".into(),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the canonical serialization of `config`.
    pub config_sha256: String,
    pub master_seed: u64,
    pub workers: usize,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    /// The full configuration with defaults filled in; re-running it reproduces every CSV.
    pub config: serde_json::Value,
    /// Sampler parameter echo of the first realization, including truncations.
    pub geometry_parameters: BTreeMap<String, serde_json::Value>,
    pub notes: Vec<String>,
    pub outputs: Vec<String>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(command: &str, cfg: &RunConfig, master_seed: u64, workers: usize) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: cfg.sha256()?,
            master_seed,
            workers,
            started_unix: unix_now(),
            finished_unix: None,
            config: serde_json::to_value(cfg)?,
            geometry_parameters: BTreeMap::new(),
            notes: proxy_notes(),
            outputs: Vec::new(),
        })
    }
}

/// Output directory that remembers what it wrote so a failed run can be cleaned up.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn track(&mut self, name: &str) -> PathBuf {
        let p = self.path(name);
        if !self.written.contains(&p) {
            self.written.push(p.clone());
        }
        p
    }

    pub fn names(&self) -> Vec<String> {
        self.written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .filter(|n| n != MANIFEST)
            .collect()
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.track(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(p, text)?;
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.track(name);
        fs::write(p, text)?;
        Ok(())
    }

    /// Header row then records; '.' decimals, '\n' terminators, RFC 4180 quoting.
    pub fn write_csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let p = self.track(name);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(p)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Remove every file written so far.
    pub fn discard(self) {
        for p in self.written {
            let _ = fs::remove_file(p);
        }
    }
}

/// Shortest round-trip decimal; `inf`, `-inf` and `NaN` for non-finite values.
pub fn fmt_f(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

pub const STATS_HEADER: [&str; 5] = ["op", "n", "T", "iterations", "residual"];

/// Solver log row; wall time is left out so that reruns are byte-identical.
pub fn stats_row(s: &SolveStats) -> Vec<String> {
    vec![
        s.op.clone(),
        s.n.to_string(),
        fmt_f(s.t),
        s.iterations.to_string(),
        fmt_f(s.residual),
    ]
}

#[derive(Serialize)]
struct FieldHeader<'a> {
    dimension: usize,
    cells_per_side: usize,
    box_side: f64,
    a_minus: f64,
    a_plus: f64,
    matrix_volume_fraction: f64,
    layout: &'a str,
    data: &'a str,
}

/// `field.json` header and `field.csv` with one row per cell in grid order.
pub fn dump_field(out: &mut OutDir, field: &CoefficientField, stem: &str) -> Result<()> {
    let g = field.grid;
    let data = format!("{stem}.csv");
    out.write_json(
        &format!("{stem}.json"),
        &FieldHeader {
            dimension: g.dimension,
            cells_per_side: g.n(),
            box_side: g.box_side,
            a_minus: field.a_minus,
            a_plus: field.a_plus,
            matrix_volume_fraction: field.matrix_volume_fraction(),
            layout: "row-major, last axis fastest",
            data: &data,
        },
    )?;
    let rows: Vec<Vec<String>> = (0..g.len())
        .map(|c| {
            vec![
                c.to_string(),
                u8::from(field.matrix_mask[c]).to_string(),
                fmt_f(field.cell_value[c]),
            ]
        })
        .collect();
    out.write_csv(&data, &header(&["cell", "matrix", "a"]), &rows)
}
