//! Expert review state: an append-only JSONL log of retain/discard
//! decisions and severity threshold labels, with the derived queue and
//! severity-table export.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::manifest::Manifest;
use crate::model::{DegradationSpec, DegradationType, Modality, ReviewStatusKind, Severity};
use crate::pipeline::{ReviewAction, ReviewDecision};
use crate::registry::{apply_degradation, SeverityTable, Thresholds};

/// Seed used for every slider preview so repeated renders agree.
pub const PREVIEW_SEED: u64 = 0x5EED_0000_0001;
pub const DEFAULT_PAGE_SIZE: usize = 50;

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdLabel {
    #[serde(rename = "type")]
    pub kind: DegradationType,
    pub modality: Modality,
    pub image_id: String,
    pub t_l1: f64,
    pub t_l2: f64,
    pub annotator: String,
    #[serde(default)]
    pub timestamp: u64,
}

impl ThresholdLabel {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_l1 > 0.0 && self.t_l1 < self.t_l2 && self.t_l2 <= 1.0) {
            return Err(Error::param(
                "thresholds",
                format!("need 0 < t_L1 < t_L2 <= 1, got {} / {}", self.t_l1, self.t_l2),
            ));
        }
        if !self.kind.supports(self.modality) {
            return Err(Error::Incompatible {
                kind: self.kind,
                modality: self.modality,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "lowercase")]
pub enum LogEntry {
    Review(ReviewDecision),
    Threshold(ThresholdLabel),
}

/// Review decisions from a log, ignoring threshold entries. Plain decision
/// lines without an `entry` tag are accepted too.
pub fn read_decisions(path: impl AsRef<Path>) -> Result<Vec<ReviewDecision>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let json_err = |source| Error::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        };
        let value: serde_json::Value = serde_json::from_str(line).map_err(json_err)?;
        match value.get("entry").and_then(|e| e.as_str()) {
            Some("threshold") => {}
            _ => out.push(serde_json::from_value(value).map_err(json_err)?),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub sample_id: String,
    pub pair_id: String,
    pub modality: Modality,
    #[serde(rename = "type")]
    pub kind: Option<DegradationType>,
    pub severity: Severity,
    pub image_path: String,
    pub question: String,
    pub status: ReviewStatusKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub annotator: String,
    pub status: ReviewStatusKind,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub pages: usize,
    pub items: Vec<QueueItem>,
}

fn annotator_seed(annotator: &str) -> u64 {
    let d = Sha256::digest(annotator.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// In-memory index over the review log, rebuilt from disk on open.
#[derive(Debug)]
pub struct ReviewStore {
    manifest: Manifest,
    index: HashMap<String, usize>,
    log_path: PathBuf,
    log: File,
    decisions: HashMap<(String, String), ReviewDecision>,
    thresholds: Vec<ThresholdLabel>,
    annotators: Option<HashSet<String>>,
}

impl ReviewStore {
    pub fn open(manifest: Manifest, log_path: impl Into<PathBuf>) -> Result<Self> {
        let log_path = log_path.into();
        crate::eval::repair_results(&log_path)?;
        let mut decisions = HashMap::new();
        let mut thresholds = Vec::new();
        if log_path.exists() {
            let text = std::fs::read_to_string(&log_path).map_err(|e| Error::io(&log_path, e))?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let value: serde_json::Value =
                    serde_json::from_str(line).map_err(|source| Error::Json {
                        path: log_path.clone(),
                        line: i + 1,
                        source,
                    })?;
                let entry = if value.get("entry").is_some() {
                    serde_json::from_value(value)
                } else {
                    serde_json::from_value(value).map(LogEntry::Review)
                }
                .map_err(|source| Error::Json {
                    path: log_path.clone(),
                    line: i + 1,
                    source,
                })?;
                match entry {
                    LogEntry::Review(d) => {
                        decisions.insert((d.sample_id.clone(), d.annotator.clone()), d);
                    }
                    LogEntry::Threshold(t) => thresholds.push(t),
                }
            }
        }
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        let index = manifest
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| (s.sample_id.clone(), i))
            .collect();
        Ok(Self {
            manifest,
            index,
            log_path,
            log,
            decisions,
            thresholds,
            annotators: None,
        })
    }

    /// Restricts threshold and review submissions to known annotators.
    pub fn with_annotators(mut self, annotators: impl IntoIterator<Item = String>) -> Self {
        self.annotators = Some(annotators.into_iter().collect());
        self
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    pub fn thresholds(&self) -> &[ThresholdLabel] {
        &self.thresholds
    }

    fn check_annotator(&self, annotator: &str) -> Result<()> {
        if annotator.trim().is_empty() {
            return Err(Error::param("annotator", "annotator id is required"));
        }
        match &self.annotators {
            Some(known) if !known.contains(annotator) => {
                Err(Error::param("annotator", format!("unknown annotator `{annotator}`")))
            }
            _ => Ok(()),
        }
    }

    fn append(&mut self, entry: &LogEntry) -> Result<()> {
        let mut line = serde_json::to_string(entry)?;
        line.push('\n');
        self.log
            .write_all(line.as_bytes())
            .and_then(|_| self.log.sync_data())
            .map_err(|e| Error::io(&self.log_path, e))
    }

    /// Status of a sample as seen by one annotator.
    pub fn status(&self, sample_id: &str, annotator: &str) -> ReviewStatusKind {
        if let Some(&i) = self.index.get(sample_id) {
            let base = self.manifest.samples[i].review.status;
            if base != ReviewStatusKind::Pending {
                return base;
            }
        }
        match self.decisions.get(&(sample_id.to_string(), annotator.to_string())) {
            Some(d) if d.action == ReviewAction::Discard => ReviewStatusKind::Discarded,
            Some(_) => ReviewStatusKind::Retained,
            None => ReviewStatusKind::Pending,
        }
    }

    pub fn record_review(&mut self, mut decision: ReviewDecision) -> Result<ReviewDecision> {
        decision.validate()?;
        self.check_annotator(&decision.annotator)?;
        let Some(&i) = self.index.get(&decision.sample_id) else {
            return Err(Error::Review {
                sample: decision.sample_id.clone(),
                reason: "no such sample".into(),
            });
        };
        if self.manifest.samples[i].review.status != ReviewStatusKind::Pending {
            return Err(Error::Review {
                sample: decision.sample_id.clone(),
                reason: "sample is not pending".into(),
            });
        }
        let key = (decision.sample_id.clone(), decision.annotator.clone());
        if self.decisions.contains_key(&key) {
            return Err(Error::Review {
                sample: decision.sample_id.clone(),
                reason: format!("already decided by `{}`", decision.annotator),
            });
        }
        if decision.timestamp == 0 {
            decision.timestamp = now_ms();
        }
        self.append(&LogEntry::Review(decision.clone()))?;
        self.decisions.insert(key, decision.clone());
        Ok(decision)
    }

    /// Stores a threshold label and returns its position in the label list.
    pub fn record_threshold(&mut self, mut label: ThresholdLabel) -> Result<usize> {
        label.validate()?;
        self.check_annotator(&label.annotator)?;
        if label.timestamp == 0 {
            label.timestamp = now_ms();
        }
        self.append(&LogEntry::Threshold(label.clone()))?;
        self.thresholds.push(label);
        Ok(self.thresholds.len() - 1)
    }

    /// All review decisions in log order.
    pub fn decisions(&self) -> Vec<ReviewDecision> {
        let mut v: Vec<_> = self.decisions.values().cloned().collect();
        v.sort_by(|a, b| {
            (a.timestamp, &a.sample_id, &a.annotator).cmp(&(b.timestamp, &b.sample_id, &b.annotator))
        });
        v
    }

    pub fn decisions_jsonl(&self) -> String {
        self.decisions()
            .iter()
            .map(|d| serde_json::to_string(d).expect("decision serializes") + "\n")
            .collect()
    }

    /// Samples with the given per-annotator status, in an order that is
    /// pseudo-random but fixed for each annotator. Pages count from 0.
    pub fn queue(
        &self,
        annotator: &str,
        status: ReviewStatusKind,
        page: usize,
        page_size: usize,
    ) -> Result<QueuePage> {
        if page_size == 0 {
            return Err(Error::param("page_size", "must be >= 1"));
        }
        let mut order: Vec<usize> = (0..self.manifest.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(annotator_seed(annotator)));
        let matching: Vec<usize> = order
            .into_iter()
            .filter(|&i| self.status(&self.manifest.samples[i].sample_id, annotator) == status)
            .collect();
        let total = matching.len();
        let items = matching
            .iter()
            .skip(page * page_size)
            .take(page_size)
            .map(|&i| {
                let s = &self.manifest.samples[i];
                QueueItem {
                    sample_id: s.sample_id.clone(),
                    pair_id: s.pair_id.clone(),
                    modality: s.modality,
                    kind: s.kind(),
                    severity: s.severity(),
                    image_path: s.image_path.clone(),
                    question: s.question.clone(),
                    status,
                }
            })
            .collect();
        Ok(QueuePage {
            annotator: annotator.to_string(),
            status,
            page,
            page_size,
            total,
            pages: total.div_ceil(page_size),
            items,
        })
    }

    /// `base` with per-modality thresholds replaced by annotator medians.
    pub fn export_severity_table(&self, base: &SeverityTable) -> Result<SeverityTable> {
        export_thresholds(base, &self.thresholds)
    }
}

pub fn export_thresholds(base: &SeverityTable, labels: &[ThresholdLabel]) -> Result<SeverityTable> {
    let mut grouped: BTreeMap<(DegradationType, Modality), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for l in labels {
        let g = grouped.entry((l.kind, l.modality)).or_default();
        g.0.push(l.t_l1);
        g.1.push(l.t_l2);
    }
    let mut table = base.clone();
    for ((kind, modality), (t1, t2)) in grouped {
        let thresholds = Thresholds {
            t_l1: median(&t1).expect("non-empty group"),
            t_l2: median(&t2).expect("non-empty group"),
        };
        table.set_modality_thresholds(kind, modality, thresholds)?;
    }
    Ok(table)
}

/// Renders `img` at slider position `t` with the fixed preview seed.
pub fn render_preview(
    img: &Image,
    modality: Modality,
    kind: DegradationType,
    t: f64,
    table: &SeverityTable,
) -> Result<Image> {
    let params = table.params_at(kind, t)?;
    if !kind.supports(modality) {
        return Err(Error::Incompatible { kind, modality });
    }
    if t == 0.0 {
        return Ok(img.clone());
    }
    let spec = DegradationSpec::new(kind, Severity::L1, params, PREVIEW_SEED);
    apply_degradation(img, modality, &spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Capability, DiscardReason, QaPair};
    use crate::pipeline::{assign_degradations, PipelineConfig};

    fn manifest(pairs: usize) -> Manifest {
        let table = SeverityTable::default();
        let config = PipelineConfig::default();
        let mut samples = Vec::new();
        for i in 0..pairs {
            let p = QaPair {
                pair_id: format!("p{i}"),
                image_path: "x.png".into(),
                question: "q".into(),
                options: vec!["a".into(), "b".into()],
                answer: "B".into(),
                modality: Modality::Ct,
                capability: Capability::default(),
                source: None,
            };
            samples.extend(assign_degradations(&p, 3, &table, &config).unwrap());
        }
        Manifest::new(samples)
    }

    fn label(t1: f64, t2: f64, who: &str) -> ThresholdLabel {
        ThresholdLabel {
            kind: DegradationType::SparseView,
            modality: Modality::Ct,
            image_id: "p0".into(),
            t_l1: t1,
            t_l2: t2,
            annotator: who.into(),
            timestamp: 0,
        }
    }

    #[test]
    fn decisions_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("decisions.jsonl");
        let m = manifest(2);
        let first = m.samples[0].sample_id.clone();
        let second = m.samples[1].sample_id.clone();
        {
            let mut store = ReviewStore::open(m.clone(), &log).unwrap();
            store.record_review(ReviewDecision::retain(&first, "r1")).unwrap();
            store
                .record_review(ReviewDecision::discard(&second, "r1", DiscardReason::SevereOverDegradation))
                .unwrap();
            store.record_threshold(label(0.3, 0.7, "r1")).unwrap();
            assert!(store.record_review(ReviewDecision::retain(&first, "r1")).is_err());
        }
        let store = ReviewStore::open(m, &log).unwrap();
        assert_eq!(store.status(&first, "r1"), ReviewStatusKind::Retained);
        assert_eq!(store.status(&second, "r1"), ReviewStatusKind::Discarded);
        assert_eq!(store.status(&first, "r2"), ReviewStatusKind::Pending);
        assert_eq!(store.thresholds().len(), 1);
        let ds = read_decisions(&log).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[1].reason, Some(DiscardReason::SevereOverDegradation));
        assert_eq!(store.decisions_jsonl().lines().count(), 2);
    }

    #[test]
    fn review_validation() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(1);
        let id = m.samples[0].sample_id.clone();
        let mut store = ReviewStore::open(m, dir.path().join("d.jsonl"))
            .unwrap()
            .with_annotators(["r1".to_string()]);
        let mut no_reason = ReviewDecision::discard(&id, "r1", DiscardReason::PoorBaseline);
        no_reason.reason = None;
        assert!(store.record_review(no_reason).is_err());
        assert!(store.record_review(ReviewDecision::retain("missing", "r1")).is_err());
        assert!(store.record_review(ReviewDecision::retain(&id, "stranger")).is_err());
        assert!(store.record_threshold(label(0.3, 0.7, "stranger")).is_err());
        assert!(store.record_threshold(label(0.7, 0.3, "r1")).is_err());
        let mut wrong = label(0.3, 0.7, "r1");
        wrong.modality = Modality::Dermoscopy;
        assert!(store.record_threshold(wrong).is_err());
        assert_eq!(store.record_threshold(label(0.3, 0.7, "r1")).unwrap(), 0);
    }

    #[test]
    fn queue_order_and_pagination() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(18);
        let mut store = ReviewStore::open(m, dir.path().join("d.jsonl")).unwrap();
        let all = |store: &ReviewStore, who: &str| -> Vec<String> {
            (0..3)
                .flat_map(|p| store.queue(who, ReviewStatusKind::Pending, p, 50).unwrap().items)
                .map(|i| i.sample_id)
                .collect()
        };
        let a = all(&store, "alice");
        assert_eq!(a.len(), 126);
        assert_eq!(a, all(&store, "alice"));
        assert_ne!(a, all(&store, "bob"));
        let sizes: Vec<_> = (0..3)
            .map(|p| store.queue("alice", ReviewStatusKind::Pending, p, 50).unwrap().items.len())
            .collect();
        assert_eq!(sizes, [50, 50, 26]);
        assert_eq!(store.queue("alice", ReviewStatusKind::Pending, 0, 50).unwrap().pages, 3);

        store
            .record_review(ReviewDecision::discard(&a[0], "alice", DiscardReason::ClinicallyIrrelevant))
            .unwrap();
        store.record_review(ReviewDecision::retain(&a[1], "alice")).unwrap();
        let discarded = store.queue("alice", ReviewStatusKind::Discarded, 0, 50).unwrap();
        assert_eq!(discarded.items.len(), 1);
        assert_eq!(discarded.items[0].sample_id, a[0]);
        let pending = all(&store, "alice");
        assert_eq!(pending, a[2..].to_vec());
    }

    #[test]
    fn threshold_export_uses_medians() {
        let labels = [label(0.2, 0.5, "a"), label(0.3, 0.8, "b"), label(0.4, 0.6, "c")];
        let table = export_thresholds(&SeverityTable::default(), &labels).unwrap();
        let th = table.thresholds(DegradationType::SparseView, Some(Modality::Ct));
        assert_eq!(th.t_l1, 0.3);
        assert_eq!(th.t_l2, 0.6);
        assert_eq!(median(&[1.0, 4.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn previews() {
        let img = crate::phantom::shepp_logan(64);
        let table = SeverityTable::default();
        let clean = render_preview(&img, Modality::Ct, DegradationType::SparseView, 0.0, &table).unwrap();
        assert!(clean.bit_eq(&img));
        let a = render_preview(&img, Modality::Ct, DegradationType::GaussianNoise, 0.5, &table).unwrap();
        let b = render_preview(&img, Modality::Ct, DegradationType::GaussianNoise, 0.5, &table).unwrap();
        assert!(a.bit_eq(&b));
        let mild = render_preview(&img, Modality::Ct, DegradationType::GaussianNoise, 0.3, &table).unwrap();
        let harsh = render_preview(&img, Modality::Ct, DegradationType::GaussianNoise, 1.0, &table).unwrap();
        assert!(harsh.psnr(&img) < mild.psnr(&img));
        assert!(render_preview(&img, Modality::Dermoscopy, DegradationType::LowDose, 0.5, &table).is_err());
        assert!(render_preview(&img, Modality::Ct, DegradationType::LowDose, 1.5, &table).is_err());
    }
}
