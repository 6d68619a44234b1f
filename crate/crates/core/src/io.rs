//! Panel CSV files, house-price preprocessing and report output.
//!
//! Panel files are UTF-8, comma separated, with the header
//! `unit,<time_label_1>,...,<time_label_T>` and one row per unit.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::datagen::SyntheticDataset;
use crate::engine::InterventionSplit;
use crate::error::{Error, Result};
use crate::evaluation::{GapExperimentResult, PlaceboReport, RecoveryTable};
use crate::matrix::Matrix;
use crate::panel::TimePanel;
use crate::rank::SpectrumRow;

/// Where the pre-intervention window ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum T0Spec {
    /// Number of pre-intervention periods.
    Count(usize),
    /// Label of the last pre-intervention period.
    LastPreLabel(String),
}

impl T0Spec {
    fn resolve(&self, labels: &[String]) -> std::result::Result<usize, String> {
        match self {
            T0Spec::Count(t0) => Ok(*t0),
            T0Spec::LastPreLabel(l) => labels
                .iter()
                .position(|x| x == l)
                .map(|p| p + 1)
                .ok_or_else(|| format!("t0 label '{l}' is not a column of the header")),
        }
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::parse(path, e.to_string())
}

pub fn load_panel_csv(path: impl AsRef<Path>, t0: &T0Spec) -> Result<TimePanel> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| csv_err(path, e))?,
        None => return Err(Error::parse(path, "file is empty")),
    };
    if header.len() < 2 {
        return Err(Error::parse(path, "header needs a unit column and at least one period"));
    }
    let labels: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let t = labels.len();
    let mut ids: Vec<String> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut values = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != t + 1 {
            return Err(Error::parse(
                path,
                format!("ragged row at line {line}: {} fields, header has {}", rec.len(), t + 1),
            ));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(Error::parse(path, format!("missing unit id at line {line}")));
        }
        if let Some(first) = seen.insert(id.clone(), line) {
            return Err(Error::parse(
                path,
                format!("duplicate unit id '{id}' at line {line} (first at line {first})"),
            ));
        }
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let col = &labels[j];
            if cell.is_empty() {
                return Err(Error::parse(
                    path,
                    format!("missing value at line {line}, column '{col}' (unit '{id}')"),
                ));
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse(
                    path,
                    format!("non-numeric value '{cell}' at line {line}, column '{col}'"),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    format!("non-finite value '{cell}' at line {line}, column '{col}'"),
                ));
            }
            values.push(v);
        }
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(Error::parse(path, "no unit rows"));
    }
    let t0 = t0.resolve(&labels).map_err(|m| Error::parse(path, m))?;
    let split = InterventionSplit::new(t0, t).map_err(|e| Error::parse(path, e.to_string()))?;
    let matrix = Matrix::new(ids.len(), t, values)?;
    TimePanel::new(ids, labels, matrix, split)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    }
}

fn write_matrix_csv(path: &Path, ids: &[String], labels: &[String], m: &Matrix) -> Result<()> {
    let mut w = csv_writer(path)?;
    let header = std::iter::once("unit").chain(labels.iter().map(String::as_str));
    w.write_record(header).map_err(|e| write_err(path, e))?;
    for (i, id) in ids.iter().enumerate() {
        let row = std::iter::once(id.clone()).chain(m.row(i).iter().map(|v| v.to_string()));
        w.write_record(row).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Values are written in shortest round-trip form, so loading the file
/// back gives bit-identical values.
pub fn write_panel_csv(panel: &TimePanel, path: impl AsRef<Path>) -> Result<()> {
    write_matrix_csv(path.as_ref(), &panel.unit_ids, &panel.time_labels, &panel.values)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct DatasetMetadata<'a> {
    params: &'a crate::datagen::DatasetParams,
    seed: Option<u64>,
    t0: usize,
    unit_ids: &'a [String],
    group_labels: &'a [usize],
}

/// Writes `<stem>.csv` (observed panel), `<stem>_signal.csv` (noiseless
/// signal) and `<stem>_meta.json` (parameters, seed and group labels).
pub fn write_dataset(ds: &SyntheticDataset, out_dir: impl AsRef<Path>, stem: &str) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    let panel_path = dir.join(format!("{stem}.csv"));
    let signal_path = dir.join(format!("{stem}_signal.csv"));
    let meta_path = dir.join(format!("{stem}_meta.json"));
    write_panel_csv(&ds.panel, &panel_path)?;
    write_matrix_csv(&signal_path, &ds.panel.unit_ids, &ds.panel.time_labels, &ds.true_signal)?;
    write_json(
        &DatasetMetadata {
            params: &ds.params,
            seed: ds.seed,
            t0: ds.panel.split.t0,
            unit_ids: &ds.panel.unit_ids,
            group_labels: &ds.group_labels,
        },
        &meta_path,
    )?;
    Ok(vec![panel_path, signal_path, meta_path])
}

/// One observation of a house-price index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpiRecord {
    pub unit: String,
    pub year: i32,
    pub quarter: u8,
    pub value: Option<f64>,
}

/// Reads index records from either a long-form file with the header
/// `unit,year,quarter,value`, or the headerless FHFA metro layout
/// `name,code,year,quarter,index,...` (the code becomes the unit id).
/// Empty, `-` and `.` cells count as missing values.
pub fn read_hpi_records(path: impl AsRef<Path>) -> Result<Vec<HpiRecord>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let mut out = Vec::new();
    let mut layout: Option<(usize, usize, usize, usize)> = None;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if layout.is_none() {
            let lower: Vec<String> = rec.iter().map(str::to_ascii_lowercase).collect();
            if lower.first().map(String::as_str) == Some("unit") {
                let find = |name: &str| {
                    lower
                        .iter()
                        .position(|c| c == name)
                        .ok_or_else(|| Error::parse(path, format!("header lacks a '{name}' column")))
                };
                layout = Some((0, find("year")?, find("quarter")?, find("value")?));
                continue;
            }
            layout = Some((1, 2, 3, 4));
        }
        let (u, y, q, v) = layout.expect("set above");
        let need = u.max(y).max(q).max(v) + 1;
        if rec.len() < need {
            return Err(Error::parse(
                path,
                format!("line {line} has {} fields, expected at least {need}", rec.len()),
            ));
        }
        let year: i32 = rec[y]
            .parse()
            .map_err(|_| Error::parse(path, format!("bad year '{}' at line {line}", &rec[y])))?;
        let quarter: u8 = rec[q]
            .parse()
            .ok()
            .filter(|q| (1..=4).contains(q))
            .ok_or_else(|| Error::parse(path, format!("bad quarter '{}' at line {line}", &rec[q])))?;
        let value = match &rec[v] {
            "" | "-" | "." => None,
            s => Some(
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(path, format!("bad value '{s}' at line {line}")))?,
            ),
        };
        out.push(HpiRecord {
            unit: rec[u].to_string(),
            year,
            quarter,
            value,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpiSummary {
    pub input_units: usize,
    pub retained: usize,
    pub dropped: usize,
    pub periods: usize,
}

fn quarter_index(year: i32, quarter: u8) -> i64 {
    i64::from(year) * 4 + i64::from(quarter) - 1
}

/// Keeps the quarters in `[start, end]` and the units observed in every one
/// of them. Units appear in order of first occurrence; labels read `1997Q1`.
pub fn preprocess_hpi(
    records: &[HpiRecord],
    start: (i32, u8),
    end: (i32, u8),
    t0: usize,
) -> Result<(TimePanel, HpiSummary)> {
    let (lo, hi) = (quarter_index(start.0, start.1), quarter_index(end.0, end.1));
    if lo > hi {
        return Err(Error::InvalidParams("date range start is after its end".into()));
    }
    let periods = (hi - lo + 1) as usize;
    let split = InterventionSplit::new(t0, periods)?;
    let mut order: Vec<String> = Vec::new();
    let mut cells: HashMap<String, Vec<Option<f64>>> = HashMap::new();
    for r in records {
        let row = cells.entry(r.unit.clone()).or_insert_with(|| {
            order.push(r.unit.clone());
            vec![None; periods]
        });
        let q = quarter_index(r.year, r.quarter);
        if (lo..=hi).contains(&q) {
            let slot = &mut row[(q - lo) as usize];
            if slot.is_some() && r.value.is_some() {
                return Err(Error::InvalidInput(format!(
                    "unit '{}' has two values for {}Q{}",
                    r.unit, r.year, r.quarter
                )));
            }
            if r.value.is_some() {
                *slot = r.value;
            }
        }
    }
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for unit in &order {
        let row = &cells[unit];
        if row.iter().all(Option::is_some) {
            ids.push(unit.clone());
            values.extend(row.iter().map(|v| v.expect("checked")));
        }
    }
    let summary = HpiSummary {
        input_units: order.len(),
        retained: ids.len(),
        dropped: order.len() - ids.len(),
        periods,
    };
    if ids.is_empty() {
        return Err(Error::EmptyPanel(format!(
            "none of {} units is complete over the range",
            order.len()
        )));
    }
    let labels = (lo..=hi).map(|q| format!("{}Q{}", q.div_euclid(4), q.rem_euclid(4) + 1)).collect();
    let matrix = Matrix::new(ids.len(), periods, values)?;
    Ok((TimePanel::new(ids, labels, matrix, split)?, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub unit_ids: Vec<String>,
    pub model: ClusterModel,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub rows: Vec<SpectrumRow>,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub result: GapExperimentResult,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub table: RecoveryTable,
    pub config: serde_json::Value,
}

pub enum Report<'a> {
    Placebo(&'a PlaceboReport),
    Gap(&'a GapReport),
    Spectrum(&'a SpectrumReport),
    Recovery(&'a RecoveryReport),
    Cluster(&'a ClusterReport),
}

/// One row of the long-form plot file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub dataset: usize,
    pub noise: Option<f64>,
    pub variant: String,
    pub metric: String,
    pub value: f64,
}

fn row(dataset: usize, noise: Option<f64>, variant: &str, metric: &str, value: f64) -> PlotRow {
    PlotRow {
        dataset,
        noise,
        variant: variant.to_string(),
        metric: metric.to_string(),
        value,
    }
}

impl Report<'_> {
    pub fn plot_rows(&self) -> Vec<PlotRow> {
        let mut out = Vec::new();
        match self {
            Report::Placebo(r) => {
                for t in &r.per_target {
                    let (d, s, v) = (t.replicate, t.noise_level, t.variant.as_str());
                    out.push(row(d, s, v, "pre_mse", t.pre_mse));
                    out.push(row(d, s, v, "post_mse", t.post_mse));
                    if let Some(p) = t.active_donor_precision {
                        out.push(row(d, s, v, "active_donor_precision", p));
                    }
                    if let Some(p) = t.selection_precision {
                        out.push(row(d, s, v, "selection_precision", p));
                    }
                }
                for m in &r.improvement_medians {
                    out.push(row(m.replicate, m.noise_level, &m.candidate, "median_improvement", m.median));
                }
            }
            Report::Gap(g) => {
                let level = Some(g.result.params.noise.level());
                for (i, &gap) in g.result.per_trial.iter().enumerate() {
                    out.push(row(i, level, "gap", "gap", gap));
                }
            }
            Report::Spectrum(s) => {
                for r in &s.rows {
                    out.push(row(r.index, None, "spectrum", "sigma", r.sigma));
                    out.push(row(r.index, None, "spectrum", "cumulative_ratio", r.cumulative_ratio));
                }
            }
            Report::Recovery(r) => {
                for c in &r.table.cells {
                    for (i, &m) in c.per_dataset.iter().enumerate() {
                        out.push(row(i, Some(c.noise_level), "cluster_model", "misassignment", m));
                    }
                }
            }
            Report::Cluster(c) => {
                for &(k, score) in &c.model.k_scores {
                    out.push(row(k, None, "cluster_model", "silhouette", score));
                }
                for (i, &l) in c.model.assignments.iter().enumerate() {
                    out.push(row(i, None, "cluster_model", "label", l as f64));
                }
            }
        }
        out
    }

    fn write_structured(&self, path: &Path) -> Result<()> {
        match self {
            Report::Placebo(r) => write_json(r, path),
            Report::Gap(r) => write_json(r, path),
            Report::Spectrum(r) => write_json(r, path),
            Report::Recovery(r) => write_json(r, path),
            Report::Cluster(r) => write_json(r, path),
        }
    }
}

/// Writes `<stem>.json` with the full report and `<stem>_plot.csv` with
/// columns `dataset,noise,variant,metric,value`. Output is byte-identical
/// for identical reports.
pub fn write_report(report: &Report<'_>, out_dir: impl AsRef<Path>, stem: &str) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json_path = dir.join(format!("{stem}.json"));
    let plot_path = dir.join(format!("{stem}_plot.csv"));
    report.write_structured(&json_path)?;
    let mut w = csv_writer(&plot_path)?;
    w.write_record(["dataset", "noise", "variant", "metric", "value"])
        .map_err(|e| write_err(&plot_path, e))?;
    for r in report.plot_rows() {
        let noise = r.noise.map(|n| n.to_string()).unwrap_or_default();
        w.write_record([r.dataset.to_string(), noise, r.variant, r.metric, r.value.to_string()])
            .map_err(|e| write_err(&plot_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&plot_path, e))?;
    Ok(vec![json_path, plot_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn message(e: Error) -> String {
        e.to_string()
    }

    #[test]
    fn loads_small_panel() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", "unit,t1,t2,t3\na,1,2,3\nb,4,5,6.5\n");
        let panel = load_panel_csv(&p, &T0Spec::Count(2)).unwrap();
        assert_eq!((panel.n_units(), panel.n_periods(), panel.split.t0), (2, 3, 2));
        assert_eq!(panel.values.get(1, 2), 6.5);
        let by_label = load_panel_csv(&p, &T0Spec::LastPreLabel("t2".into())).unwrap();
        assert_eq!(by_label.split.t0, 2);
    }

    #[test]
    fn distinct_load_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let blank = write(d, "blank.csv", "unit,t1,t2\na,1,\nb,1,2\n");
        let m = message(load_panel_csv(&blank, &T0Spec::Count(1)).unwrap_err());
        assert!(m.contains("missing value at line 2, column 't2'"), "{m}");
        let dup = write(d, "dup.csv", "unit,t1,t2\na,1,2\na,1,2\n");
        assert!(message(load_panel_csv(&dup, &T0Spec::Count(1)).unwrap_err()).contains("duplicate unit id 'a'"));
        let ragged = write(d, "ragged.csv", "unit,t1,t2\na,1,2,3\n");
        assert!(message(load_panel_csv(&ragged, &T0Spec::Count(1)).unwrap_err()).contains("ragged row at line 2"));
        let text = write(d, "text.csv", "unit,t1,t2\na,1,x\n");
        assert!(message(load_panel_csv(&text, &T0Spec::Count(1)).unwrap_err()).contains("non-numeric value 'x'"));
        let good = write(d, "good.csv", "unit,t1,t2\na,1,2\n");
        let m = message(load_panel_csv(&good, &T0Spec::LastPreLabel("t9".into())).unwrap_err());
        assert!(m.contains("t0 label 't9'"), "{m}");
        assert!(matches!(
            load_panel_csv(d.join("absent.csv"), &T0Spec::Count(1)),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn hpi_filtering() {
        let mut recs = Vec::new();
        for (unit, skip) in [("x", None), ("y", Some((2000, 2))), ("z", None)] {
            for year in 1999..=2001 {
                for quarter in 1..=4u8 {
                    let value = if skip == Some((year, quarter)) { None } else { Some(f64::from(year) + f64::from(quarter) / 10.0) };
                    recs.push(HpiRecord { unit: unit.into(), year, quarter, value });
                }
            }
        }
        let (panel, summary) = preprocess_hpi(&recs, (2000, 1), (2000, 4), 3).unwrap();
        assert_eq!(summary.retained, 2);
        assert_eq!(summary.dropped, 1);
        assert_eq!(panel.unit_ids, vec!["x", "z"]);
        assert_eq!(panel.time_labels[0], "2000Q1");
        assert_eq!(panel.n_periods(), 4);
        // the gap lies outside this range, so everyone is kept
        let (_, summary) = preprocess_hpi(&recs, (2001, 1), (2001, 4), 2).unwrap();
        assert_eq!(summary.retained, summary.input_units);
        let only_y: Vec<HpiRecord> = recs.iter().filter(|r| r.unit == "y").cloned().collect();
        assert!(matches!(preprocess_hpi(&only_y, (2000, 1), (2000, 4), 3), Err(Error::EmptyPanel(_))));
    }

    #[test]
    fn hpi_file_layouts() {
        let dir = tempfile::tempdir().unwrap();
        let long = write(dir.path(), "long.csv", "unit,year,quarter,value\na,2000,1,100\na,2000,2,\n");
        let recs = read_hpi_records(&long).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].value, None);
        let fhfa = write(
            dir.path(),
            "fhfa.csv",
            "\"Abilene, TX\",10180,2000,1,101.5,2.1\n\"Abilene, TX\",10180,2000,2,-,-\n",
        );
        let recs = read_hpi_records(&fhfa).unwrap();
        assert_eq!(recs[0].unit, "10180");
        assert_eq!(recs[0].value, Some(101.5));
        assert_eq!(recs[1].value, None);
    }

    #[test]
    fn report_output_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let rows = crate::rank::spectrum_report(&Matrix::from_diagonal(3, 3, &[3.0, 2.0, 1.0])).unwrap();
        let report = SpectrumReport {
            rows,
            config: serde_json::Value::Null,
        };
        let a = write_report(&Report::Spectrum(&report), dir.path().join("a"), "s").unwrap();
        let b = write_report(&Report::Spectrum(&report), dir.path().join("b"), "s").unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
        let plot = fs::read_to_string(&a[1]).unwrap();
        assert_eq!(plot.lines().filter(|l| l.contains(",sigma,")).count(), 3);
    }
}
