//! JSONL benchmark manifests: one [`DegradedSample`] per line.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{label_index, DegradedSample, ReviewStatusKind, Severity};
use crate::registry::SeverityTable;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub samples: Vec<DegradedSample>,
}

impl Manifest {
    pub fn new(samples: Vec<DegradedSample>) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, sample_id: &str) -> Option<&DegradedSample> {
        self.samples.iter().find(|s| s.sample_id == sample_id)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let sample: DegradedSample = serde_json::from_str(line).map_err(|source| Error::Json {
                path: origin.to_path_buf(),
                line: i + 1,
                source,
            })?;
            if let Some(v) = sample.schema_version {
                if v != SCHEMA_VERSION {
                    return Err(Error::SchemaVersion {
                        found: v,
                        expected: SCHEMA_VERSION,
                    });
                }
            }
            samples.push(sample);
        }
        Ok(Self { samples })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_jsonl().as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Record-level invariant check; empty when every record is valid.
    pub fn violations(&self) -> Vec<Violation> {
        let table = SeverityTable::default();
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (i, s) in self.samples.iter().enumerate() {
            let mut flag = |message: String| {
                out.push(Violation {
                    line: i + 1,
                    sample_id: s.sample_id.clone(),
                    message,
                })
            };
            if !seen.insert(s.sample_id.as_str()) {
                flag("duplicate sample_id".into());
            }
            if s.image_path.is_empty() {
                flag("empty image_path".into());
            }
            let k = s.options.len();
            if !(2..=26).contains(&k) {
                flag(format!("{k} options; expected 2..=26"));
            } else if !label_index(&s.answer).is_some_and(|a| a < k) {
                flag(format!(
                    "answer `{}` is not a label in A..{}",
                    s.answer,
                    (b'A' + k as u8 - 1) as char
                ));
            }
            let d = &s.degradation;
            match d.kind {
                None => {
                    if d.severity != Severity::L0 {
                        flag(format!("{} sample without a degradation type", d.severity));
                    }
                    if d.category.is_some() {
                        flag("category set on a clean sample".into());
                    }
                }
                Some(kind) => {
                    if !kind.supports(s.modality) {
                        flag(format!("`{kind}` is not compatible with {}", s.modality));
                    }
                    if d.category != Some(kind.category()) {
                        flag(format!(
                            "category {:?} does not match `{kind}` ({})",
                            d.category,
                            kind.category()
                        ));
                    }
                    if d.severity == Severity::L0 && d.params != table.identity_params(kind) {
                        flag("L0 sample does not carry identity parameters".into());
                    }
                }
            }
            match (s.review.status, s.review.reason) {
                (ReviewStatusKind::Discarded, None) => flag("discarded without a reason".into()),
                (ReviewStatusKind::Pending | ReviewStatusKind::Retained, Some(_)) => {
                    flag("discard reason on a non-discarded sample".into())
                }
                _ => {}
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub line: usize,
    pub sample_id: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {} ({}): {}", self.line, self.sample_id, self.message)
    }
}

/// Parses a manifest file and lists every invariant violation.
pub fn validate_manifest(path: impl AsRef<Path>) -> Result<Vec<Violation>> {
    Ok(Manifest::read(path)?.violations())
}

/// Reads any JSONL file of `T` records, skipping blank lines.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}
