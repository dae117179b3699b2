//! Grid experiments. Every grid point owns a directory; a completion marker
//! lets an interrupted grid resume without recomputing finished points.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{run_pipeline, PipelineConfig};
use crate::error::{Error, Result};
use crate::evaluate::{AlignmentReport, ComparisonRow};

/// Written into a point (or dataset) directory once it is complete.
pub const DONE_MARKER: &str = ".done";

const ROW_FILE: &str = "row.json";

/// One experiment axis: a dotted config key such as `features.fps` and the
/// values it takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone)]
pub struct GridPoint {
    pub index: usize,
    pub settings: Vec<(String, Value)>,
    pub config: PipelineConfig,
}

fn show(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl GridPoint {
    pub fn label(&self) -> String {
        if self.settings.is_empty() {
            return "base".into();
        }
        self.settings
            .iter()
            .map(|(k, v)| format!("{k}={}", show(v)))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn dir_name(&self) -> String {
        format!("point_{:03}", self.index)
    }
}

fn set_key(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let unknown = || Error::config(format!("unknown config key '{key}'"));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(unknown)?;
        let slot = obj.get_mut(*part).ok_or_else(unknown)?;
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    Err(unknown())
}

/// Cartesian product of the axes applied to `base`, first axis slowest.
/// Without axes the grid is the base config alone.
pub fn expand_grid(base: &PipelineConfig, axes: &[GridAxis]) -> Result<Vec<GridPoint>> {
    if let Some(a) = axes.iter().find(|a| a.values.is_empty()) {
        return Err(Error::config(format!(
            "grid axis '{}' has no values",
            a.key
        )));
    }
    let mut base = base.clone();
    base.grid.clear();
    let base_json = serde_json::to_value(&base)?;
    let total: usize = axes.iter().map(|a| a.values.len()).product();
    let mut points = Vec::with_capacity(total);
    for index in 0..total {
        let mut rest = index;
        let mut settings = Vec::with_capacity(axes.len());
        for axis in axes.iter().rev() {
            let n = axis.values.len();
            settings.push((axis.key.clone(), axis.values[rest % n].clone()));
            rest /= n;
        }
        settings.reverse();
        let mut json = base_json.clone();
        for (k, v) in &settings {
            set_key(&mut json, k, v.clone())?;
        }
        let mut config: PipelineConfig = serde_json::from_value(json)
            .map_err(|e| Error::config(format!("grid point {index}: {e}")))?;
        if let Some(seed) = settings
            .iter()
            .any(|(k, _)| k == "seed")
            .then_some(config.seed)
            .flatten()
        {
            config.set_seed(seed);
        }
        config.validate()?;
        points.push(GridPoint {
            index,
            settings,
            config,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub index: usize,
    pub label: String,
    pub settings: Map<String, Value>,
    pub status: PointStatus,
    pub error: Option<String>,
    pub metrics: Option<ComparisonRow>,
}

/// Rows in grid order; CSV columns are the axis keys followed by the
/// metrics of [`ComparisonRow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub axes: Vec<String>,
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["point".to_string()];
        header.extend(self.axes.iter().cloned());
        header.push("status".into());
        header.extend(
            crate::evaluate::COMPARISON_HEADER[1..]
                .iter()
                .map(|s| s.to_string()),
        );
        header.push("error".into());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut record = vec![row.index.to_string()];
            record.extend(
                self.axes
                    .iter()
                    .map(|a| row.settings.get(a).map(show).unwrap_or_default()),
            );
            record.push(
                if row.status == PointStatus::Ok {
                    "ok"
                } else {
                    "failed"
                }
                .into(),
            );
            match &row.metrics {
                Some(m) => record.extend(
                    [
                        m.mean_ms,
                        m.median_ms,
                        m.std_ms,
                        m.acc_100ms,
                        m.acc_50ms,
                        m.acc_25ms,
                        m.acc_10ms,
                    ]
                    .iter()
                    .map(|v| format!("{v:.2}")),
                ),
                None => record.extend(std::iter::repeat_n(String::new(), 7)),
            }
            record.push(row.error.clone().unwrap_or_default());
            w.write_record(&record)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Evaluation(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `results.csv` and `results.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, text) in [
            ("results.csv", self.to_csv()?),
            ("results.json", self.to_json()?),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Computes the report of one grid point, writing artifacts into `dir`.
pub trait PointRunner {
    fn run(&mut self, point: &GridPoint, dir: &Path) -> Result<AlignmentReport>;
}

impl<F: FnMut(&GridPoint, &Path) -> Result<AlignmentReport>> PointRunner for F {
    fn run(&mut self, point: &GridPoint, dir: &Path) -> Result<AlignmentReport> {
        self(point, dir)
    }
}

/// Runs the full pipeline per point, sharing datasets through `cache_dir`.
#[derive(Debug, Clone)]
pub struct PipelineRunner {
    pub cache_dir: PathBuf,
}

impl PointRunner for PipelineRunner {
    fn run(&mut self, point: &GridPoint, dir: &Path) -> Result<AlignmentReport> {
        Ok(run_pipeline(&point.config, dir, &self.cache_dir)?.pooled)
    }
}

fn read_row(dir: &Path) -> Option<ExperimentRow> {
    if !dir.join(DONE_MARKER).exists() {
        return None;
    }
    serde_json::from_str(&std::fs::read_to_string(dir.join(ROW_FILE)).ok()?).ok()
}

/// Runs every point of `base.grid` (or only point `only`) under `out_dir`.
/// Completed points are read back instead of recomputed; a failing point
/// is recorded and the grid continues. The results table is rewritten
/// after every point.
pub fn run_experiment(
    base: &PipelineConfig,
    out_dir: &Path,
    only: Option<usize>,
    runner: &mut dyn PointRunner,
) -> Result<ExperimentTable> {
    let points = expand_grid(base, &base.grid)?;
    if let Some(i) = only.filter(|&i| i >= points.len()) {
        return Err(Error::config(format!(
            "grid has {} points, no point {i}",
            points.len()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut table = ExperimentTable {
        axes: base.grid.iter().map(|a| a.key.clone()).collect(),
        rows: Vec::with_capacity(points.len()),
    };
    for point in &points {
        let dir = out_dir.join(point.dir_name());
        if let Some(row) = read_row(&dir) {
            log::info!("point {} ({}) already complete", point.index, point.label());
            table.rows.push(row);
            continue;
        }
        if only.is_some_and(|i| i != point.index) {
            continue;
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let config_path = dir.join("config.json");
        std::fs::write(&config_path, point.config.to_json()?)
            .map_err(|e| Error::io(&config_path, e))?;
        log::info!("running point {} ({})", point.index, point.label());
        let label = point.label();
        let mut row = ExperimentRow {
            index: point.index,
            label: label.clone(),
            settings: point.settings.iter().cloned().collect(),
            status: PointStatus::Ok,
            error: None,
            metrics: None,
        };
        match runner.run(point, &dir) {
            Ok(report) => row.metrics = Some(ComparisonRow::from_report(&label, &report)),
            Err(e) => {
                log::error!("point {} failed: {e}", point.index);
                row.status = PointStatus::Failed;
                row.error = Some(e.to_string());
            }
        }
        let row_path = dir.join(ROW_FILE);
        std::fs::write(&row_path, serde_json::to_string_pretty(&row)?)
            .map_err(|e| Error::io(&row_path, e))?;
        if row.status == PointStatus::Ok {
            let marker = dir.join(DONE_MARKER);
            std::fs::write(&marker, b"").map_err(|e| Error::io(marker, e))?;
        }
        table.rows.push(row);
        table.write(out_dir)?;
    }
    table.write(out_dir)?;
    Ok(table)
}
