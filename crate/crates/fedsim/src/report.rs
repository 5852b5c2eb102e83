//! Report rendering and persistence: lossless 17-significant-digit number
//! formatting, the flattened metric table, per-round accuracy traces, and
//! atomic file output.
//!
//! Every float that leaves the simulator goes through [`fmt17`], so a CSV
//! cell and the same value in a JSON record parse back to the identical
//! 64-bit pattern. Files are written to a temporary sibling and renamed
//! into place, so readers never observe a torn file.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};

use crate::error::{Error, Result};
use crate::experiment::{
    expand_cells, CellOutcome, DatasetSpec, ScenarioConfig, ScenarioOutcome, SCHEMA_VERSION,
};
use crate::strategies::StrategyKind;

/// Which sampler produced a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MSM")]
    Msm,
    #[serde(rename = "FR")]
    Fr,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Msm => "MSM",
            Method::Fr => "FR",
        })
    }
}

/// One line of the flattened metric table: one (cell, method) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario_id: String,
    pub dataset: String,
    pub alpha: f64,
    pub epochs: usize,
    pub seed: u64,
    pub method: Method,
    pub sample_count: usize,
    pub avg_std: Option<f64>,
    pub l2: f64,
    pub linf: f64,
}

/// One point of an accuracy trace: a single round of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub scenario_id: String,
    pub alpha: f64,
    pub epochs: usize,
    pub seed: u64,
    pub method: Method,
    /// Run index within its sampler (ensemble member or FedRandom sample).
    pub run: usize,
    pub round: usize,
    /// The aggregation rule applied that round.
    pub strategy: StrategyKind,
    pub accuracy: f64,
}

/// One persisted cell: the outcome plus enough context to rebuild reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub schema_version: u32,
    pub scenario_id: String,
    pub dataset: String,
    pub cell: CellOutcome,
}

/// The two table views a report renders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub rows: Vec<ReportRow>,
    pub traces: Vec<TraceRow>,
}

/// Output encoding for [`render_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Formats a float with 17 significant digits: enough that parsing the
/// text recovers the exact 64-bit value, for every finite input.
pub fn fmt17(x: f64) -> String {
    let fixed = format!("{x:.16e}");
    if fixed.parse::<f64>().map(f64::to_bits) == Ok(x.to_bits()) {
        return fixed;
    }
    // The standard fixed-precision scientific formatter mis-rounds the
    // final digit for a small set of values, enough to land on a
    // neighboring double when parsed back. Fall back to the shortest
    // round-trip form, zero-padded to the same 17-digit width; appending
    // zeros never changes the parsed value.
    let shortest = format!("{x:e}");
    let (mantissa, exp) = shortest.split_once('e').expect("scientific form");
    let (int_part, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    format!("{int_part}.{frac:0<16}e{exp}")
}

fn fmt17_opt(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

/// JSON formatter that renders every f64 through [`fmt17`] and otherwise
/// behaves exactly like the pretty printer it wraps.
struct Digits17<F> {
    inner: F,
}

impl<F: Formatter> Formatter for Digits17<F> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt17(value).as_bytes())
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Pretty-printed JSON with all floats at 17 significant digits.
pub fn to_json_17<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let fmt = Digits17 {
        inner: PrettyFormatter::new(),
    };
    let mut ser = Serializer::with_formatter(&mut out, fmt);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Report(format!("json serialization failed: {e}")))?;
    String::from_utf8(out).map_err(|e| Error::Report(format!("json output not utf-8: {e}")))
}

/// Short human label for a dataset spec, used in report rows.
pub fn dataset_label(spec: &DatasetSpec) -> String {
    match spec {
        DatasetSpec::Synthetic {
            num_classes,
            input_dim,
            ..
        } => format!("synthetic-{num_classes}c-{input_dim}d"),
        DatasetSpec::Idx { images, .. } => Path::new(images)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "idx".to_string()),
    }
}

/// The two report rows (MSM first, then FR) for one cell.
pub fn rows_for_cell(scenario_id: &str, dataset: &str, cell: &CellOutcome) -> [ReportRow; 2] {
    let base = |method, report: &crate::experiment::MetricsReport| ReportRow {
        scenario_id: scenario_id.to_string(),
        dataset: dataset.to_string(),
        alpha: cell.key.alpha,
        epochs: cell.key.epochs,
        seed: cell.key.seed,
        method,
        sample_count: report.sample_count,
        avg_std: report.avg_std,
        l2: report.l2,
        linf: report.linf,
    };
    [base(Method::Msm, &cell.msm), base(Method::Fr, &cell.fedrandom)]
}

pub const ROW_HEADER: &str =
    "scenario_id,dataset,alpha,epochs,seed,method,sample_count,avg_std,l2,linf";

/// Renders the metric table as CSV: header then one line per row, LF only.
pub fn csv_rows(rows: &[ReportRow]) -> String {
    let mut out = String::from(ROW_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.scenario_id,
            r.dataset,
            fmt17(r.alpha),
            r.epochs,
            r.seed,
            r.method,
            r.sample_count,
            fmt17_opt(r.avg_std),
            fmt17(r.l2),
            fmt17(r.linf)
        );
    }
    out
}

pub const TRACE_HEADER: &str =
    "scenario_id,alpha,epochs,seed,method,run,round,strategy,accuracy";

/// Renders the accuracy traces as CSV with the same conventions.
pub fn csv_traces(traces: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for t in traces {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            t.scenario_id,
            fmt17(t.alpha),
            t.epochs,
            t.seed,
            t.method,
            t.run,
            t.round,
            t.strategy,
            fmt17(t.accuracy)
        );
    }
    out
}

/// Flattens one cell record into per-round trace points, MSM runs first.
pub fn trace_rows(record: &CellRecord) -> Vec<TraceRow> {
    let mut out = Vec::new();
    let mut push_runs = |method, runs: &[crate::experiment::RunRecord]| {
        for (run_idx, run) in runs.iter().enumerate() {
            for entry in &run.rounds {
                out.push(TraceRow {
                    scenario_id: record.scenario_id.clone(),
                    alpha: record.cell.key.alpha,
                    epochs: record.cell.key.epochs,
                    seed: record.cell.key.seed,
                    method,
                    run: run_idx,
                    round: entry.round,
                    strategy: entry.strategy,
                    accuracy: entry.accuracy,
                });
            }
        }
    };
    push_runs(Method::Msm, &record.cell.msm_runs);
    push_runs(Method::Fr, &record.cell.fedrandom_runs);
    out
}

/// Builds the full report (metric rows plus traces) from cell records.
pub fn build_report(records: &[CellRecord]) -> Report {
    let mut rows = Vec::with_capacity(records.len() * 2);
    let mut traces = Vec::new();
    for record in records {
        rows.extend(rows_for_cell(
            &record.scenario_id,
            &record.dataset,
            &record.cell,
        ));
        traces.extend(trace_rows(record));
    }
    Report {
        schema_version: SCHEMA_VERSION,
        rows,
        traces,
    }
}

/// Renders a report in the requested encoding. The CSV form carries both
/// tables in one stream, each under a bracketed section marker.
pub fn render_report(report: &Report, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => to_json_17(report),
        ReportFormat::Csv => {
            let mut out = String::from("[rows]\n");
            out.push_str(&csv_rows(&report.rows));
            out.push_str("\n[traces]\n");
            out.push_str(&csv_traces(&report.traces));
            Ok(out)
        }
    }
}

/// Writes `contents` to `path` atomically: the bytes land in a sibling
/// temporary file that is renamed over the target, so the target either
/// keeps its old content or holds the complete new content.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Report(format!("not a writable path: {}", path.display())))?;
    let mut tmp = path.to_path_buf();
    tmp.set_file_name(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn cell_file_name(index: usize) -> String {
    format!("cell_{index:04}.json")
}

/// Persists a finished scenario: one JSON record per cell under `cells/`,
/// the flattened metric table as `report.csv`, and the comparison summary
/// as `summary.json` (written last, so its presence marks a complete run).
pub fn write_experiment_dir(
    dir: &Path,
    scenario: &ScenarioConfig,
    outcome: &ScenarioOutcome,
) -> Result<()> {
    let keys = expand_cells(scenario);
    if keys.len() != outcome.cells.len() {
        return Err(Error::Report(format!(
            "scenario expands to {} cells but outcome holds {}",
            keys.len(),
            outcome.cells.len()
        )));
    }
    let dataset = dataset_label(&scenario.base.dataset);
    let cells_dir = dir.join("cells");
    let mut rows = Vec::with_capacity(outcome.cells.len() * 2);
    for (i, cell) in outcome.cells.iter().enumerate() {
        let record = CellRecord {
            schema_version: SCHEMA_VERSION,
            scenario_id: scenario.id.clone(),
            dataset: dataset.clone(),
            cell: cell.clone(),
        };
        atomic_write(&cells_dir.join(cell_file_name(i)), &to_json_17(&record)?)?;
        rows.extend(rows_for_cell(&scenario.id, &dataset, cell));
    }
    atomic_write(&dir.join("report.csv"), &csv_rows(&rows))?;
    atomic_write(&dir.join("summary.json"), &to_json_17(&outcome.summary)?)?;
    Ok(())
}

/// Loads every cell record under `dir/cells`, in file-name order. Readable
/// files that fail to parse are all listed in one error; an empty or
/// missing directory is an explicit "no records" error.
pub fn read_cells(dir: &Path) -> Result<Vec<CellRecord>> {
    let cells_dir = dir.join("cells");
    let mut paths: Vec<PathBuf> = match std::fs::read_dir(&cells_dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect(),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(Error::io(&cells_dir, e)),
    };
    if paths.is_empty() {
        return Err(Error::Report(format!(
            "no records found under {}",
            cells_dir.display()
        )));
    }
    paths.sort();
    let mut records = Vec::with_capacity(paths.len());
    let mut bad = Vec::new();
    for path in &paths {
        match std::fs::read_to_string(path) {
            Ok(text) => match serde_json::from_str::<CellRecord>(&text) {
                Ok(rec) => records.push(rec),
                Err(e) => bad.push(format!("{}: {e}", path.display())),
            },
            Err(e) => bad.push(format!("{}: {e}", path.display())),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Report(format!(
            "{} corrupt record file(s):\n{}",
            bad.len(),
            bad.join("\n")
        )));
    }
    Ok(records)
}
