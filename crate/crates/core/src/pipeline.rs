//! Benchmark construction: pool deduplication, degradation assignment,
//! rendering, and application of expert review decisions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::manifest::{read_jsonl, Manifest};
use crate::model::{
    Category, DegradationSpec, DegradationType, DegradedSample, DiscardReason, QaPair,
    ReviewStatus, ReviewStatusKind, Severity,
};
use crate::registry::{apply_degradation, compatible_types, resolve_params, sample_seed, SeverityTable};

pub const POOL_FILE: &str = "pool.jsonl";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const STATS_FILE: &str = "stats.json";
pub const BUILD_INFO_FILE: &str = "build_info.json";
pub const IMAGES_DIR: &str = "images";

fn default_types_per_pair() -> usize {
    3
}

fn default_similarity() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_types_per_pair")]
    pub types_per_pair: usize,
    /// Token-Jaccard threshold at which two questions on the same image
    /// count as duplicates.
    #[serde(default = "default_similarity")]
    pub similarity_threshold: f64,
    /// Relative draw weights; types not listed weigh 1.
    #[serde(default)]
    pub weights: BTreeMap<DegradationType, f64>,
    #[serde(default)]
    pub severity_table: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            types_per_pair: default_types_per_pair(),
            similarity_threshold: default_similarity(),
            weights: BTreeMap::new(),
            severity_table: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Self = toml::from_str(&text)?;
        if let Some(table) = &config.severity_table {
            if table.is_relative() {
                config.severity_table = Some(path.parent().unwrap_or(Path::new(".")).join(table));
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.types_per_pair == 0 {
            return Err(Error::param("types_per_pair", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return Err(Error::param("similarity_threshold", "must lie in [0, 1]"));
        }
        if let Some((t, w)) = self.weights.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::param("weights", format!("`{t}` has weight {w}")));
        }
        Ok(())
    }

    pub fn table(&self) -> Result<SeverityTable> {
        match &self.severity_table {
            Some(path) => SeverityTable::load(path),
            None => Ok(SeverityTable::default()),
        }
    }

    fn weight(&self, kind: DegradationType) -> f64 {
        self.weights.get(&kind).copied().unwrap_or(1.0)
    }
}

/// Lowercased alphanumeric tokens of a question.
pub fn question_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn token_jaccard(a: &str, b: &str) -> f64 {
    let (a, b) = (question_tokens(a), question_tokens(b));
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolWarning {
    pub pair_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedPair {
    pub pair_id: String,
    pub duplicate_of: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DedupReport {
    pub kept: Vec<QaPair>,
    pub dropped: Vec<DroppedPair>,
    pub warnings: Vec<PoolWarning>,
}

/// Dedup given precomputed image digests (`None` marks an unreadable image).
pub fn dedup_with_digests(pairs: Vec<QaPair>, digests: &[Option<String>], threshold: f64) -> DedupReport {
    assert_eq!(pairs.len(), digests.len());
    let mut report = DedupReport::default();
    let mut by_digest: HashMap<&str, Vec<usize>> = HashMap::new();
    for (pair, digest) in pairs.into_iter().zip(digests) {
        let Some(digest) = digest else {
            report.warnings.push(PoolWarning {
                pair_id: pair.pair_id.clone(),
                message: "image could not be read; pair skipped".into(),
            });
            continue;
        };
        let twins = by_digest.entry(digest).or_default();
        let original = twins
            .iter()
            .map(|&i| &report.kept[i])
            .find(|k| token_jaccard(&k.question, &pair.question) >= threshold);
        if let Some(original) = original {
            report.dropped.push(DroppedPair {
                pair_id: pair.pair_id.clone(),
                duplicate_of: original.pair_id.clone(),
            });
            continue;
        }
        twins.push(report.kept.len());
        report.kept.push(pair);
    }
    report
}

fn resolve_image(root: &Path, image_path: &str) -> PathBuf {
    let p = Path::new(image_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

/// Drops a pair when its image is pixel-identical to an already kept pair
/// AND the two questions are near-identical. First occurrence wins.
pub fn dedup_pool(pairs: Vec<QaPair>, root: &Path, threshold: f64) -> DedupReport {
    let digests: Vec<Option<String>> = pairs
        .par_iter()
        .map(|p| Image::load(resolve_image(root, &p.image_path)).ok().map(|img| img.content_digest()))
        .collect();
    dedup_with_digests(pairs, &digests, threshold)
}

fn draw_types(
    candidates: &[DegradationType],
    count: usize,
    config: &PipelineConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<DegradationType> {
    let mut pool: Vec<(DegradationType, f64)> =
        candidates.iter().map(|&t| (t, config.weight(t))).filter(|(_, w)| *w > 0.0).collect();
    let mut out = Vec::with_capacity(count);
    while out.len() < count && !pool.is_empty() {
        let total: f64 = pool.iter().map(|(_, w)| w).sum();
        let mut x = rng.random_range(0.0..total);
        let mut pick = pool.len() - 1;
        for (i, (_, w)) in pool.iter().enumerate() {
            if x < *w {
                pick = i;
                break;
            }
            x -= w;
        }
        out.push(pool.remove(pick).0);
    }
    out
}

pub fn sample_id(pair_id: &str, kind: Option<DegradationType>, severity: Severity) -> String {
    match kind {
        None => format!("{pair_id}__L0"),
        Some(k) => format!("{pair_id}__{k}__{severity}"),
    }
}

fn image_rel_path(sample_id: &str) -> String {
    format!("{IMAGES_DIR}/{sample_id}.png")
}

/// The clean reference plus `types_per_pair` distinct compatible types at
/// L1 and L2, with seed-derived parameter choices already resolved.
pub fn assign_degradations(
    pair: &QaPair,
    run_seed: u64,
    table: &SeverityTable,
    config: &PipelineConfig,
) -> Result<Vec<DegradedSample>> {
    let candidates = compatible_types(pair.modality);
    let n = config.types_per_pair;
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(&pair.pair_id, None, Severity::L0, run_seed));
    rng.set_stream(2);
    let kinds = draw_types(&candidates, n, config, &mut rng);
    if kinds.len() < n {
        return Err(Error::InvalidRecord {
            id: pair.pair_id.clone(),
            reason: format!(
                "{} has only {} drawable degradation types; {n} required",
                pair.modality,
                kinds.len()
            ),
        });
    }
    let mut out = Vec::with_capacity(1 + 2 * n);
    let l0 = DegradationSpec {
        seed: sample_seed(&pair.pair_id, None, Severity::L0, run_seed),
        ..DegradationSpec::identity()
    };
    let id = sample_id(&pair.pair_id, None, Severity::L0);
    out.push(DegradedSample::new(pair, id.clone(), &l0, image_rel_path(&id)));
    for kind in kinds {
        // L1 and L2 of one type share their direction/angle draws so the two
        // levels differ only in magnitude.
        let type_seed = sample_seed(&pair.pair_id, Some(kind), Severity::L0, run_seed);
        for severity in [Severity::L1, Severity::L2] {
            let params = table.level_params(kind, severity, Some(pair.modality));
            let params = resolve_params(kind, &params, type_seed)?;
            let seed = sample_seed(&pair.pair_id, Some(kind), severity, run_seed);
            let spec = DegradationSpec::new(kind, severity, params, seed);
            let id = sample_id(&pair.pair_id, Some(kind), severity);
            out.push(DegradedSample::new(pair, id.clone(), &spec, image_rel_path(&id)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewAction {
    Retain,
    Discard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub sample_id: String,
    pub action: ReviewAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<DiscardReason>,
    pub annotator: String,
    /// Unix time in milliseconds.
    #[serde(default)]
    pub timestamp: u64,
}

impl ReviewDecision {
    pub fn retain(sample_id: &str, annotator: &str) -> Self {
        Self {
            sample_id: sample_id.into(),
            action: ReviewAction::Retain,
            reason: None,
            annotator: annotator.into(),
            timestamp: 0,
        }
    }

    pub fn discard(sample_id: &str, annotator: &str, reason: DiscardReason) -> Self {
        Self {
            sample_id: sample_id.into(),
            action: ReviewAction::Discard,
            reason: Some(reason),
            annotator: annotator.into(),
            timestamp: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.action, self.reason) {
            (ReviewAction::Discard, None) => Err(Error::Review {
                sample: self.sample_id.clone(),
                reason: "discard requires a reason".into(),
            }),
            (ReviewAction::Retain, Some(_)) => Err(Error::Review {
                sample: self.sample_id.clone(),
                reason: "retain takes no reason".into(),
            }),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSummary {
    pub total: usize,
    pub reviewed: usize,
    pub retained: usize,
    pub discarded: usize,
    pub removal_fraction: f64,
    pub by_reason: BTreeMap<DiscardReason, usize>,
}

/// Applies decisions to pending samples. A sample is removed when any
/// annotator discarded it; otherwise it is marked retained.
pub fn apply_review(manifest: &Manifest, decisions: &[ReviewDecision]) -> Result<(Manifest, ReviewSummary)> {
    let index: HashMap<&str, &DegradedSample> =
        manifest.samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();
    let mut seen = BTreeSet::new();
    let mut verdict: HashMap<&str, Option<DiscardReason>> = HashMap::new();
    for d in decisions {
        d.validate()?;
        let Some(sample) = index.get(d.sample_id.as_str()) else {
            return Err(Error::Review {
                sample: d.sample_id.clone(),
                reason: "no such sample in the manifest".into(),
            });
        };
        if sample.review.status != ReviewStatusKind::Pending {
            return Err(Error::Review {
                sample: d.sample_id.clone(),
                reason: format!("sample is {:?}, not pending", sample.review.status),
            });
        }
        if !seen.insert((d.sample_id.as_str(), d.annotator.as_str())) {
            return Err(Error::Review {
                sample: d.sample_id.clone(),
                reason: format!("annotator `{}` decided twice", d.annotator),
            });
        }
        let v = verdict.entry(d.sample_id.as_str()).or_insert(None);
        if v.is_none() {
            *v = d.reason;
        }
    }
    let mut by_reason = BTreeMap::new();
    let mut kept = Vec::with_capacity(manifest.len());
    let (mut retained, mut discarded) = (0, 0);
    for s in &manifest.samples {
        match verdict.get(s.sample_id.as_str()) {
            Some(Some(reason)) => {
                discarded += 1;
                *by_reason.entry(*reason).or_insert(0) += 1;
            }
            Some(None) => {
                retained += 1;
                let mut s = s.clone();
                s.review = ReviewStatus::RETAINED;
                kept.push(s);
            }
            None => kept.push(s.clone()),
        }
    }
    let total = manifest.len();
    let summary = ReviewSummary {
        total,
        reviewed: verdict.len(),
        retained,
        discarded,
        removal_fraction: if total == 0 { 0.0 } else { discarded as f64 / total as f64 },
        by_reason,
    };
    Ok((Manifest::new(kept), summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStat {
    pub category: Category,
    pub count: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeStat {
    pub name: DegradationType,
    pub category: Category,
    pub count: usize,
    pub ratio_in_parent: f64,
    pub ratio_in_total: f64,
    pub modality: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestStats {
    pub pairs: usize,
    pub samples: usize,
    pub degraded: usize,
    pub by_severity: BTreeMap<Severity, usize>,
    pub categories: Vec<CategoryStat>,
    pub types: Vec<TypeStat>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<PoolWarning>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub duplicates: Vec<DroppedPair>,
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Per-category and per-type counts over degraded (non-L0) samples.
pub fn manifest_stats(manifest: &Manifest) -> ManifestStats {
    let mut by_type: BTreeMap<DegradationType, usize> = BTreeMap::new();
    let mut by_severity = BTreeMap::new();
    let mut pairs = BTreeSet::new();
    for s in &manifest.samples {
        pairs.insert(s.pair_id.as_str());
        *by_severity.entry(s.severity()).or_insert(0) += 1;
        if let Some(k) = s.kind() {
            *by_type.entry(k).or_insert(0) += 1;
        }
    }
    let degraded: usize = by_type.values().sum();
    let cat_count = |c: Category| {
        by_type
            .iter()
            .filter(|(t, _)| t.category() == c)
            .map(|(_, n)| n)
            .sum::<usize>()
    };
    let categories = Category::ALL
        .into_iter()
        .map(|c| CategoryStat {
            category: c,
            count: cat_count(c),
            ratio: ratio(cat_count(c), degraded),
        })
        .collect();
    let types = DegradationType::ALL
        .into_iter()
        .map(|t| {
            let n = by_type.get(&t).copied().unwrap_or(0);
            TypeStat {
                name: t,
                category: t.category(),
                count: n,
                ratio_in_parent: ratio(n, cat_count(t.category())),
                ratio_in_total: ratio(n, degraded),
                modality: if t.is_general() {
                    "All".into()
                } else {
                    t.modalities().iter().map(|m| m.as_str()).collect::<Vec<_>>().join(", ")
                },
            }
        })
        .collect();
    ManifestStats {
        pairs: pairs.len(),
        samples: manifest.len(),
        degraded,
        by_severity,
        categories,
        types,
        skipped: Vec::new(),
        duplicates: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildInfo {
    pub created_unix: u64,
    pub run_seed: u64,
    pub pool: PathBuf,
    pub records: usize,
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub manifest: Manifest,
    pub stats: ManifestStats,
    pub manifest_path: PathBuf,
}

pub fn read_pool(pool_dir: &Path) -> Result<Vec<QaPair>> {
    let pairs: Vec<QaPair> = read_jsonl(pool_dir.join(POOL_FILE))?;
    for p in &pairs {
        p.validate()?;
    }
    Ok(pairs)
}

fn render_pair(
    pool_dir: &Path,
    out_dir: &Path,
    pair: &QaPair,
    samples: &[DegradedSample],
) -> Result<()> {
    let clean = Image::load(resolve_image(pool_dir, &pair.image_path))?;
    let rendered = samples
        .iter()
        .map(|s| Ok((s, apply_degradation(&clean, pair.modality, &s.degradation.spec())?)))
        .collect::<Result<Vec<_>>>()?;
    for (s, img) in rendered {
        img.save_png(out_dir.join(&s.image_path))?;
    }
    Ok(())
}

/// Reads `pool.jsonl` from `pool_dir`, dedups, assigns and renders every
/// sample, and writes the manifest, stats and a timestamp sidecar to
/// `out_dir`. Pairs whose images fail to load or render are skipped whole.
pub fn build_manifest(
    pool_dir: &Path,
    config: &PipelineConfig,
    run_seed: u64,
    out_dir: &Path,
) -> Result<BuildOutput> {
    config.validate()?;
    let table = config.table()?;
    let pairs = read_pool(pool_dir)?;
    let dedup = dedup_pool(pairs, pool_dir, config.similarity_threshold);
    let images = out_dir.join(IMAGES_DIR);
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;

    let assigned = dedup
        .kept
        .iter()
        .map(|p| assign_degradations(p, run_seed, &table, config))
        .collect::<Result<Vec<_>>>()?;
    let outcomes: Vec<Result<()>> = dedup
        .kept
        .par_iter()
        .zip(&assigned)
        .map(|(pair, samples)| render_pair(pool_dir, out_dir, pair, samples))
        .collect();

    let mut skipped = dedup.warnings;
    let mut samples = Vec::new();
    for ((pair, batch), outcome) in dedup.kept.iter().zip(assigned).zip(outcomes) {
        match outcome {
            Ok(()) => samples.extend(batch),
            Err(e) => {
                tracing::warn!(pair = %pair.pair_id, error = %e, "skipping pair");
                for s in &batch {
                    let _ = std::fs::remove_file(out_dir.join(&s.image_path));
                }
                skipped.push(PoolWarning {
                    pair_id: pair.pair_id.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    let manifest = Manifest::new(samples);
    let manifest_path = out_dir.join(MANIFEST_FILE);
    manifest.write(&manifest_path)?;

    let mut stats = manifest_stats(&manifest);
    stats.skipped = skipped;
    stats.duplicates = dedup.dropped;
    write_json(&out_dir.join(STATS_FILE), &stats)?;

    let info = BuildInfo {
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        run_seed,
        pool: pool_dir.to_path_buf(),
        records: manifest.len(),
    };
    write_json(&out_dir.join(BUILD_INFO_FILE), &info)?;
    Ok(BuildOutput {
        manifest,
        stats,
        manifest_path,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
