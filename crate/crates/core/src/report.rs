//! Aggregation of trial records into accuracy / calibration tables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::TrialRecord;
use crate::manifest::Manifest;
use crate::metrics::{inter_model_dke, intra_model_dke, AccuracyMode, SampleMetrics};
use crate::model::{Category, DegradedSample, Modality, Severity, MID_CAPABILITIES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Model,
    CapabilityMid,
    DegradationCategory,
    Modality,
    Severity,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Model => "model",
            Axis::CapabilityMid => "capability_mid",
            Axis::DegradationCategory => "degradation_category",
            Axis::Modality => "modality",
            Axis::Severity => "severity",
        }
    }

    /// Parses a comma-separated axis list such as `severity,capability_mid`.
    pub fn parse_list(s: &str) -> Result<Vec<Axis>> {
        let mut out: Vec<Axis> = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let a: Axis = part.parse()?;
            if !out.contains(&a) {
                out.push(a);
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(Axis::Model),
            "capability_mid" | "capability" => Ok(Axis::CapabilityMid),
            "degradation_category" | "category" => Ok(Axis::DegradationCategory),
            "modality" => Ok(Axis::Modality),
            "severity" => Ok(Axis::Severity),
            _ => Err(Error::param("axes", format!("unknown axis `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Column {
    All,
    L0,
    L1,
    L2,
    #[serde(rename = "L1&L2")]
    L1L2,
}

impl Column {
    pub fn as_str(self) -> &'static str {
        match self {
            Column::All => "All",
            Column::L0 => "L0",
            Column::L1 => "L1",
            Column::L2 => "L2",
            Column::L1L2 => "L1&L2",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub acc: Option<f64>,
    pub mean_confidence: Option<f64>,
    pub calib_shift: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    n: usize,
    correct: f64,
    confidence: f64,
}

impl Acc {
    fn add(&mut self, correct: f64, confidence: f64) {
        self.n += 1;
        self.correct += correct;
        self.confidence += confidence;
    }

    fn cell(&self) -> Cell {
        if self.n == 0 {
            return Cell::default();
        }
        let acc = self.correct / self.n as f64;
        let conf = self.confidence / self.n as f64;
        Cell {
            n: self.n,
            acc: Some(acc),
            mean_confidence: Some(conf),
            calib_shift: Some(conf - acc),
        }
    }
}

/// Rounds to two decimals, the precision of the printed tables.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Drop of `level_pct` relative to `l0_pct`, both in percent, in points.
pub fn drop_pp(l0_pct: f64, level_pct: f64) -> f64 {
    round2(level_pct - l0_pct)
}

/// Drops (L1 − L0, L2 − L0) from per-level accuracies in percent.
pub fn severity_drops(l0: f64, l1: f64, l2: f64) -> (f64, f64) {
    (drop_pp(l0, l1), drop_pp(l0, l2))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Drops {
    #[serde(rename = "L1-L0")]
    pub l1: Option<f64>,
    #[serde(rename = "L2-L0")]
    pub l2: Option<f64>,
    #[serde(rename = "L1&L2-L0")]
    pub combined: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub group: Vec<String>,
    pub cells: BTreeMap<Column, Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drops: Option<Drops>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intra_dke: Option<bool>,
}

impl ReportRow {
    pub fn cell(&self, c: Column) -> Cell {
        self.cells.get(&c).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterDkeRow {
    pub context: Vec<String>,
    pub models: Vec<String>,
    pub flagged: Vec<(String, String)>,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub axes: Vec<Axis>,
    pub group_axes: Vec<Axis>,
    pub columns: Vec<Column>,
    pub rows: Vec<ReportRow>,
    pub overall: Cell,
    pub accuracy_mode: AccuracyMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inter_model_dke: Vec<InterDkeRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Md,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "md" | "markdown" => Ok(Format::Md),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::param("format", format!("`{s}` is not one of md, csv, json"))),
        }
    }
}

/// Sort rank of a group value along an axis; unknown values sort last.
fn rank(axis: Axis, value: &str, model_order: &[String]) -> (usize, String) {
    let pos = match axis {
        Axis::Model => model_order.iter().position(|m| m == value),
        Axis::CapabilityMid => MID_CAPABILITIES.iter().position(|c| *c == value),
        Axis::DegradationCategory => Category::ALL.iter().position(|c| c.as_str() == value),
        Axis::Modality => Modality::ALL.iter().position(|m| m.as_str() == value),
        Axis::Severity => None,
    };
    (pos.unwrap_or(usize::MAX), value.to_string())
}

fn axis_values(
    axis: Axis,
    record: &TrialRecord,
    sample: &DegradedSample,
    pair_categories: &HashMap<&str, BTreeSet<Category>>,
) -> Vec<String> {
    match axis {
        Axis::Model => vec![record.model.clone()],
        Axis::CapabilityMid => vec![sample.capability.mid.clone()],
        Axis::Modality => vec![sample.modality.as_str().to_string()],
        Axis::DegradationCategory => match sample.category() {
            Some(c) => vec![c.as_str().to_string()],
            // A clean reference belongs to every category its pair was
            // degraded with.
            None => pair_categories
                .get(sample.pair_id.as_str())
                .map(|cs| cs.iter().map(|c| c.as_str().to_string()).collect())
                .unwrap_or_default(),
        },
        Axis::Severity => unreachable!("severity is a column axis"),
    }
}

fn cartesian(lists: &[Vec<String>]) -> Vec<Vec<String>> {
    lists.iter().fold(vec![Vec::new()], |acc, list| {
        acc.iter()
            .flat_map(|prefix| {
                list.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v.clone());
                    p
                })
            })
            .collect()
    })
}

/// Aggregates trial records over the requested axes. `severity` becomes
/// the L0 / L1 / L2 / L1&L2 columns; every other axis becomes a row key.
/// Records for discarded samples are ignored.
pub fn aggregate_report(
    results: &[TrialRecord],
    manifest: &Manifest,
    axes: &[Axis],
    mode: AccuracyMode,
) -> Result<Report> {
    let index: HashMap<&str, &DegradedSample> =
        manifest.samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();
    let mut pair_categories: HashMap<&str, BTreeSet<Category>> = HashMap::new();
    for s in manifest.samples.iter().filter(|s| !s.review.is_discarded()) {
        if let Some(c) = s.category() {
            pair_categories.entry(s.pair_id.as_str()).or_default().insert(c);
        }
    }
    let by_severity = axes.contains(&Axis::Severity);
    let group_axes: Vec<Axis> = axes.iter().copied().filter(|a| *a != Axis::Severity).collect();
    let columns = if by_severity {
        vec![Column::L0, Column::L1, Column::L2, Column::L1L2]
    } else {
        vec![Column::All]
    };

    let mut model_order: Vec<String> = Vec::new();
    let mut cells: BTreeMap<Vec<String>, BTreeMap<Column, Acc>> = BTreeMap::new();
    let mut overall = Acc::default();
    for record in results {
        let sample = index.get(record.sample_id.as_str()).ok_or_else(|| Error::InvalidRecord {
            id: record.sample_id.clone(),
            reason: "result refers to a sample missing from the manifest".into(),
        })?;
        if sample.review.is_discarded() {
            continue;
        }
        if record.trials.is_empty() {
            return Err(Error::InvalidRecord {
                id: record.sample_id.clone(),
                reason: "record has no trials".into(),
            });
        }
        if !model_order.contains(&record.model) {
            model_order.push(record.model.clone());
        }
        let answer = sample.answer_index().ok_or_else(|| Error::InvalidRecord {
            id: sample.sample_id.clone(),
            reason: format!("invalid answer `{}`", sample.answer),
        })?;
        let m = SampleMetrics::from_record(record, sample.options.len(), answer)?;
        let correct = match mode {
            AccuracyMode::PerTrial => m.accuracy(),
            AccuracyMode::MajorityVote => m.majority_correct as u8 as f64,
        };
        overall.add(correct, m.confidence);

        let sample_columns: &[Column] = match (by_severity, sample.severity()) {
            (false, _) => &[Column::All],
            (true, Severity::L0) => &[Column::L0],
            (true, Severity::L1) => &[Column::L1, Column::L1L2],
            (true, Severity::L2) => &[Column::L2, Column::L1L2],
        };
        let lists: Vec<Vec<String>> = group_axes
            .iter()
            .map(|&a| axis_values(a, record, sample, &pair_categories))
            .collect();
        for key in cartesian(&lists) {
            let row = cells.entry(key).or_default();
            for &c in sample_columns {
                row.entry(c).or_default().add(correct, m.confidence);
            }
        }
    }
    if overall.n == 0 {
        return Err(Error::Empty("no results match the manifest"));
    }

    let mut rows: Vec<ReportRow> = cells
        .into_iter()
        .map(|(group, accs)| {
            let cells: BTreeMap<Column, Cell> = columns
                .iter()
                .map(|&c| (c, accs.get(&c).map(Acc::cell).unwrap_or_default()))
                .collect();
            let mut row = ReportRow {
                group,
                cells,
                drops: None,
                intra_dke: None,
            };
            if by_severity {
                let pct = |c: Column| row.cell(c).acc.map(|a| round2(100.0 * a));
                let drop = |c: Column| Some(drop_pp(pct(Column::L0)?, pct(c)?));
                row.drops = Some(Drops {
                    l1: drop(Column::L1),
                    l2: drop(Column::L2),
                    combined: drop(Column::L1L2),
                });
                let (l0, l2) = (row.cell(Column::L0), row.cell(Column::L2));
                row.intra_dke = match (l0.acc, l2.acc, l0.calib_shift, l2.calib_shift) {
                    (Some(a0), Some(a2), Some(d0), Some(d2)) => Some(intra_model_dke(a0, a2, d0, d2)),
                    _ => None,
                };
            }
            row
        })
        .collect();
    rows.sort_by_cached_key(|r| {
        r.group
            .iter()
            .zip(&group_axes)
            .map(|(v, &a)| rank(a, v, &model_order))
            .collect::<Vec<_>>()
    });

    let inter = if by_severity {
        inter_dke_rows(&rows, &group_axes)
    } else {
        Vec::new()
    };
    Ok(Report {
        axes: axes.to_vec(),
        group_axes,
        columns,
        rows,
        overall: overall.cell(),
        accuracy_mode: mode,
        inter_model_dke: inter,
    })
}

/// Compares models at L2 within each combination of the other axes.
fn inter_dke_rows(rows: &[ReportRow], group_axes: &[Axis]) -> Vec<InterDkeRow> {
    let Some(mi) = group_axes.iter().position(|a| *a == Axis::Model) else {
        return Vec::new();
    };
    let mut contexts: Vec<(Vec<String>, Vec<(String, f64, f64)>)> = Vec::new();
    for r in rows {
        let l2 = r.cell(Column::L2);
        let (Some(acc), Some(d)) = (l2.acc, l2.calib_shift) else {
            continue;
        };
        let mut context = r.group.clone();
        let model = context.remove(mi);
        match contexts.iter_mut().find(|(c, _)| *c == context) {
            Some((_, ms)) => ms.push((model, acc, d)),
            None => contexts.push((context, vec![(model, acc, d)])),
        }
    }
    contexts
        .into_iter()
        .filter_map(|(context, ms)| {
            let pairs: Vec<(f64, f64)> = ms.iter().map(|(_, a, d)| (*a, *d)).collect();
            let r = inter_model_dke(&pairs).ok()?;
            Some(InterDkeRow {
                context,
                models: ms.iter().map(|(m, _, _)| m.clone()).collect(),
                flagged: r
                    .flagged
                    .iter()
                    .map(|&(i, j)| (ms[i].0.clone(), ms[j].0.clone()))
                    .collect(),
                fraction: r.fraction,
            })
        })
        .collect()
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "null".into(), |x| format!("{:.2}", 100.0 * x))
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "null".into(), |x| format!("{x:.2}"))
}

impl Report {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = self.group_axes.iter().map(|a| a.as_str().to_string()).collect();
        for c in &self.columns {
            h.push(format!("{} Acc", c.as_str()));
        }
        if self.columns.len() > 1 {
            h.extend(["L1-L0", "L2-L0", "L1&L2-L0"].map(String::from));
        }
        for c in &self.columns {
            h.push(format!("{} Conf", c.as_str()));
        }
        for c in &self.columns {
            h.push(format!("{} Shift", c.as_str()));
        }
        if self.columns.len() > 1 {
            h.push("Intra-DKE".into());
        }
        h.push("N".into());
        h
    }

    /// Table body with accuracy, confidence and shift in percent.
    pub fn table(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut line = r.group.clone();
                line.extend(self.columns.iter().map(|&c| pct(r.cell(c).acc)));
                if let Some(d) = &r.drops {
                    line.extend([num(d.l1), num(d.l2), num(d.combined)]);
                }
                line.extend(self.columns.iter().map(|&c| pct(r.cell(c).mean_confidence)));
                line.extend(self.columns.iter().map(|&c| pct(r.cell(c).calib_shift)));
                if self.columns.len() > 1 {
                    line.push(r.intra_dke.map_or_else(|| "null".into(), |b| b.to_string()));
                }
                let n: usize = self
                    .columns
                    .iter()
                    .filter(|&&c| c != Column::L1L2)
                    .map(|&c| r.cell(c).n)
                    .sum();
                line.push(n.to_string());
                line
            })
            .collect()
    }

    pub fn to_markdown(&self) -> String {
        let header = self.header();
        let mut out = format!("| {} |\n", header.join(" | "));
        out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
        for line in self.table() {
            out.push_str(&format!("| {} |\n", line.join(" | ")));
        }
        out.push_str(&format!(
            "\nOverall: Acc {} / Conf {} / Shift {} (N = {})\n",
            pct(self.overall.acc),
            pct(self.overall.mean_confidence),
            pct(self.overall.calib_shift),
            self.overall.n
        ));
        for r in &self.inter_model_dke {
            let ctx = if r.context.is_empty() {
                String::new()
            } else {
                format!(" [{}]", r.context.join(", "))
            };
            out.push_str(&format!(
                "Inter-model DKE at L2{ctx}: {} of {} ordered pairs flagged ({:.2})\n",
                r.flagged.len(),
                r.models.len() * r.models.len().saturating_sub(1),
                r.fraction
            ));
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::param("csv", e.to_string());
        w.write_record(self.header()).map_err(csv_err)?;
        for line in self.table() {
            w.write_record(line).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::param("csv", e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Md => Ok(self.to_markdown()),
            Format::Csv => self.to_csv(),
            Format::Json => Ok(self.to_json()),
        }
    }
}
