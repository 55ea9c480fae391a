//! Prompting and answer matching for multiple-choice evaluation, plus the
//! per-sample trial records written by a benchmark run.

use std::collections::{HashMap, HashSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::read_jsonl;
use crate::model::{label_index, option_label, QaPair};

/// Multiple-choice prompt. Line breaks are part of the template.
pub const PROMPT_TEMPLATE: &str = "You are a medical AI assistant. Please answer the following
question based on the provided medical image. {question}

{option_text}

Constraint: Output ONLY the single letter (A, B, C, or D,
E, etc) corresponding to the correct answer. No explanation,
no punctuation.

Answer:";

pub fn option_text(options: &[String]) -> String {
    options
        .iter()
        .enumerate()
        .map(|(i, o)| format!("{}. {o}", option_label(i)))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_prompt(pair: &QaPair) -> Result<String> {
    let k = pair.options.len();
    if !(2..=26).contains(&k) {
        return Err(Error::InvalidRecord {
            id: pair.pair_id.clone(),
            reason: format!("{k} options; a prompt needs between 2 and 26"),
        });
    }
    Ok(PROMPT_TEMPLATE
        .replacen("{question}", &pair.question, 1)
        .replacen("{option_text}", &option_text(&pair.options), 1))
}

/// Maps a free-text reply to an option label: an exact single letter first,
/// then the first capital that is a valid label, else nothing.
pub fn extract_answer(text: &str, k: usize) -> Option<char> {
    let valid = |c: char| c.is_ascii_uppercase() && ((c as u8 - b'A') as usize) < k;
    let trimmed = text.trim();
    let mut chars = trimmed.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        let c = c.to_ascii_uppercase();
        if valid(c) {
            return Some(c);
        }
    }
    trimmed.chars().find(|&c| valid(c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub response: String,
    pub label: Option<String>,
    pub latency_ms: u64,
}

impl Trial {
    pub fn new(response: &str, k: usize, latency_ms: u64) -> Self {
        Self {
            response: response.to_string(),
            label: extract_answer(response, k).map(String::from),
            latency_ms,
        }
    }

    /// A trial whose request never produced a reply.
    pub fn failed(latency_ms: u64) -> Self {
        Self {
            response: String::new(),
            label: None,
            latency_ms,
        }
    }

    pub fn label_index(&self) -> Option<usize> {
        self.label.as_deref().and_then(label_index)
    }
}

/// All trials of one model on one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub sample_id: String,
    pub model: String,
    pub temperature: f64,
    pub trials: Vec<Trial>,
}

impl TrialRecord {
    pub fn t(&self) -> usize {
        self.trials.len()
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.trials.iter().map(Trial::label_index).collect()
    }

    pub fn correctness(&self, answer: usize) -> Vec<bool> {
        self.labels().iter().map(|l| *l == Some(answer)).collect()
    }

    pub fn majority_label(&self, k: usize) -> Option<usize> {
        majority_vote(&self.labels(), k)
    }
}

/// Most frequent answered label; ties go to the earliest option.
pub fn majority_vote(labels: &[Option<usize>], k: usize) -> Option<usize> {
    let mut counts = vec![0usize; k];
    for l in labels.iter().flatten() {
        if *l < k {
            counts[*l] += 1;
        }
    }
    let best = *counts.iter().max()?;
    (best > 0).then(|| counts.iter().position(|&c| c == best).expect("max exists"))
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    read_jsonl(path)
}

/// Sample ids already present for `model` in a results file; empty when the
/// file does not exist yet. A truncated final line is ignored.
pub fn completed_samples(path: impl AsRef<Path>, model: &str) -> Result<HashSet<String>> {
    let path = path.as_ref();
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(HashSet::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    Ok(text
        .lines()
        .filter_map(|l| serde_json::from_str::<TrialRecord>(l).ok())
        .filter(|r| r.model == model)
        .map(|r| r.sample_id)
        .collect())
}

/// Cuts a partially written final line left by an interrupted run.
pub fn repair_results(path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(path, e)),
    };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let f = OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
    f.set_len(keep as u64).map_err(|e| Error::io(path, e))
}

pub fn append_record(path: impl AsRef<Path>, record: &TrialRecord) -> Result<()> {
    let path = path.as_ref();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Keeps the last record per (model, sample) so re-runs supersede
/// interrupted ones.
pub fn dedup_records(records: Vec<TrialRecord>) -> Vec<TrialRecord> {
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let mut out: Vec<TrialRecord> = Vec::new();
    for r in records {
        let key = (r.model.clone(), r.sample_id.clone());
        match index.get(&key) {
            Some(&i) => out[i] = r,
            None => {
                index.insert(key, out.len());
                out.push(r);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Capability, Modality};

    fn pair(k: usize) -> QaPair {
        QaPair {
            pair_id: "p".into(),
            image_path: "p.png".into(),
            question: "Which organ is shown?".into(),
            options: (0..k).map(|i| format!("option {i}")).collect(),
            answer: "A".into(),
            modality: Modality::Ct,
            capability: Capability::default(),
            source: None,
        }
    }

    #[test]
    fn prompt_lists_options_in_order() {
        let p = render_prompt(&pair(4)).unwrap();
        let starts: Vec<_> = p
            .lines()
            .filter(|l| l.len() > 2 && l.as_bytes()[1] == b'.' && l.as_bytes()[0].is_ascii_uppercase())
            .map(|l| &l[..2])
            .collect();
        assert_eq!(starts, ["A.", "B.", "C.", "D."]);
        assert!(p.ends_with("Answer:"));
        assert!(render_prompt(&pair(1)).is_err());
    }

    #[test]
    fn answer_matching_priority() {
        assert_eq!(extract_answer("B", 4), Some('B'));
        assert_eq!(extract_answer("  C\n", 4), Some('C'));
        assert_eq!(extract_answer("The answer is C.", 4), Some('C'));
        assert_eq!(extract_answer("no idea", 4), None);
        assert_eq!(extract_answer("E", 4), None);
        assert_eq!(extract_answer("d", 4), Some('D'));
        assert_eq!(extract_answer("I think (B) but maybe A", 4), Some('B'));
        assert_eq!(extract_answer("", 4), None);
        assert_eq!(extract_answer("Z", 26), Some('Z'));
    }

    #[test]
    fn majority_ties_and_abstentions() {
        assert_eq!(majority_vote(&[Some(0), Some(0), Some(1)], 4), Some(0));
        assert_eq!(majority_vote(&[Some(2), Some(1)], 4), Some(1));
        assert_eq!(majority_vote(&[None, None], 4), None);
        assert_eq!(majority_vote(&[None, Some(3), None], 4), Some(3));
    }

    #[test]
    fn results_append_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        assert!(completed_samples(&path, "m").unwrap().is_empty());
        let rec = |id: &str| TrialRecord {
            sample_id: id.into(),
            model: "m".into(),
            temperature: 1.0,
            trials: vec![Trial::new("A", 4, 3), Trial::failed(9)],
        };
        append_record(&path, &rec("s1")).unwrap();
        append_record(&path, &rec("s2")).unwrap();
        std::fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .unwrap()
            .write_all(b"{\"sample_id\":\"s3\",\"mod")
            .unwrap();
        let done = completed_samples(&path, "m").unwrap();
        assert_eq!(done, ["s1".to_string(), "s2".to_string()].into());
        assert!(completed_samples(&path, "other").unwrap().is_empty());
        assert!(read_results(&path).is_err());
        repair_results(&path).unwrap();
        assert_eq!(read_results(&path).unwrap().len(), 2);
        let v: serde_json::Value =
            serde_json::from_str(std::fs::read_to_string(&path).unwrap().lines().next().unwrap()).unwrap();
        assert_eq!(v["trials"][0]["label"], "A");
        assert!(v["trials"][1]["label"].is_null());
        assert_eq!(v["temperature"], 1.0);
    }
}
