//! Run directories: `config.json`, `metrics.jsonl`, `solutions.csv`,
//! `checkpoints/` and one `manifest.json` per run.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use fogforge_core::pareto::nondominated_indices;
use fogforge_core::{ObjectivePoint, WeightVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::write_json;

pub const SOLUTIONS_HEADER: [&str; 5] = ["w_time", "w_cost", "time", "cost", "dominated_flag"];

/// One line of `solutions.csv`. Weights are empty for producers without a
/// weight vector (NSGA-II, the oracle front).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionRow {
    pub w_time: Option<f64>,
    pub w_cost: Option<f64>,
    pub time: f64,
    pub cost: f64,
    pub dominated_flag: u8,
}

impl SolutionRow {
    pub fn point(&self) -> ObjectivePoint {
        ObjectivePoint::new(self.time, self.cost)
    }

    pub fn dominated(&self) -> bool {
        self.dominated_flag != 0
    }
}

/// Rows for `points`, flagging those dominated by another point of the set.
pub fn solution_rows(points: &[(Option<WeightVector>, ObjectivePoint)]) -> Vec<SolutionRow> {
    let objectives: Vec<ObjectivePoint> = points.iter().map(|(_, p)| *p).collect();
    let front = nondominated_indices(&objectives);
    points
        .iter()
        .enumerate()
        .map(|(i, (w, p))| SolutionRow {
            w_time: w.map(|w| w.w_time),
            w_cost: w.map(|w| w.w_cost),
            time: p.time,
            cost: p.cost,
            dominated_flag: u8::from(!front.contains(&i)),
        })
        .collect()
}

pub fn write_solutions(path: &Path, rows: &[SolutionRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    if rows.is_empty() {
        w.write_record(SOLUTIONS_HEADER).map_err(|e| Error::csv(path, e))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_solutions(path: &Path) -> Result<Vec<SolutionRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = r.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.iter().ne(SOLUTIONS_HEADER) {
        return Err(Error::Schema {
            path: path.into(),
            message: format!("expected columns {}, found {}", SOLUTIONS_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    r.deserialize().map(|row| row.map_err(|e| Error::csv(path, e))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub threads: usize,
    pub config: serde_json::Value,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub wall_seconds: f64,
    /// Paths relative to the run directory.
    pub outputs: Vec<String>,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// An open run directory.
pub struct RunDir {
    root: PathBuf,
    manifest: RunManifest,
    clock: Instant,
    metrics: BufWriter<File>,
}

impl RunDir {
    /// Creates `root`, writes `config.json` and an empty `metrics.jsonl`.
    pub fn create(root: &Path, command: &str, config: &impl Serialize, seed: u64, threads: usize) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let config = serde_json::to_value(config).map_err(|e| Error::json(root.join("config.json"), e))?;
        write_json(&root.join("config.json"), &config)?;
        let metrics_path = root.join("metrics.jsonl");
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&metrics_path)
            .map_err(|e| Error::io(&metrics_path, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: RunManifest {
                command: command.into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                seed,
                threads,
                config,
                started_unix: unix_now(),
                finished_unix: 0.0,
                wall_seconds: 0.0,
                outputs: vec!["config.json".into(), "metrics.jsonl".into()],
            },
            clock: Instant::now(),
            metrics: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn checkpoints(&self) -> Result<PathBuf> {
        let dir = self.root.join("checkpoints");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    /// Records an output file relative to the run directory.
    pub fn add_output(&mut self, relative: &str) {
        if !self.manifest.outputs.iter().any(|o| o == relative) {
            self.manifest.outputs.push(relative.into());
        }
    }

    pub fn metric(&mut self, value: &impl Serialize) -> Result<()> {
        let path = self.root.join("metrics.jsonl");
        let line = serde_json::to_string(value).map_err(|e| Error::json(&path, e))?;
        writeln!(self.metrics, "{line}").map_err(|e| Error::io(&path, e))?;
        self.metrics.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn solutions(&mut self, rows: &[SolutionRow]) -> Result<()> {
        write_solutions(&self.root.join("solutions.csv"), rows)?;
        self.add_output("solutions.csv");
        Ok(())
    }

    /// Writes `manifest.json`.
    pub fn finish(mut self) -> Result<RunManifest> {
        self.metrics.flush().map_err(|e| Error::io(self.root.join("metrics.jsonl"), e))?;
        self.manifest.finished_unix = unix_now();
        self.manifest.wall_seconds = self.clock.elapsed().as_secs_f64();
        write_json(&self.root.join("manifest.json"), &self.manifest)?;
        Ok(self.manifest)
    }
}
