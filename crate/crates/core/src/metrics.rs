//! Accuracy, vote-consistency confidence, calibration shift and the
//! Dunning-Kruger predicates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::TrialRecord;

/// Vote shares over the K options plus the mass of unanswered trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteDistribution {
    pub p: Vec<f64>,
    pub abstain: f64,
}

pub fn vote_distribution(labels: &[Option<usize>], k: usize) -> Result<VoteDistribution> {
    if labels.is_empty() {
        return Err(Error::Empty("trial labels"));
    }
    let t = labels.len() as f64;
    let mut counts = vec![0usize; k];
    let mut abstain = 0usize;
    for l in labels {
        match l {
            Some(i) if *i < k => counts[*i] += 1,
            _ => abstain += 1,
        }
    }
    Ok(VoteDistribution {
        p: counts.iter().map(|&c| c as f64 / t).collect(),
        abstain: abstain as f64 / t,
    })
}

/// Shannon entropy in nats of `p` rescaled to unit mass. A distribution
/// that is uniform over its support is evaluated as `ln(support)` exactly.
pub fn entropy(p: &[f64]) -> f64 {
    let support: Vec<f64> = p.iter().copied().filter(|&x| x > 0.0).collect();
    if support.len() <= 1 {
        return 0.0;
    }
    if support.iter().all(|&x| x == support[0]) {
        return (support.len() as f64).ln();
    }
    let mass: f64 = support.iter().sum();
    -support
        .iter()
        .map(|&x| {
            let q = x / mass;
            q * q.ln()
        })
        .sum::<f64>()
}

/// `1 - H(p) / ln K` over the answered votes; all-abstain gives 0.
pub fn confidence(p: &[f64], k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::param("K", "confidence needs at least two options"));
    }
    if p.len() != k {
        return Err(Error::param("p", format!("length {} does not match K = {k}", p.len())));
    }
    if p.iter().all(|&x| x <= 0.0) {
        return Ok(0.0);
    }
    Ok(1.0 - entropy(p) / (k as f64).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub sample_id: String,
    pub votes: VoteDistribution,
    pub entropy: f64,
    pub confidence: f64,
    pub correct: Vec<bool>,
    pub majority_correct: bool,
}

impl SampleMetrics {
    pub fn from_record(record: &TrialRecord, k: usize, answer: usize) -> Result<Self> {
        let labels = record.labels();
        let votes = vote_distribution(&labels, k)?;
        let confidence = confidence(&votes.p, k)?;
        Ok(Self {
            sample_id: record.sample_id.clone(),
            entropy: entropy(&votes.p),
            confidence,
            correct: labels.iter().map(|l| *l == Some(answer)).collect(),
            majority_correct: record.majority_label(k) == Some(answer),
            votes,
        })
    }

    /// Fraction of correct trials.
    pub fn accuracy(&self) -> f64 {
        self.correct.iter().filter(|&&c| c).count() as f64 / self.correct.len() as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMode {
    /// Every trial scored on its own, averaged per sample.
    #[default]
    PerTrial,
    MajorityVote,
}

pub fn accuracy(samples: &[SampleMetrics], mode: AccuracyMode) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let total: f64 = samples
        .iter()
        .map(|s| match mode {
            AccuracyMode::PerTrial => s.accuracy(),
            AccuracyMode::MajorityVote => s.majority_correct as u8 as f64,
        })
        .sum();
    Ok(total / samples.len() as f64)
}

pub fn mean_confidence(samples: &[SampleMetrics]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    Ok(samples.iter().map(|s| s.confidence).sum::<f64>() / samples.len() as f64)
}

/// Mean confidence minus accuracy; positive means overconfident.
pub fn calibration_shift(confidences: &[f64], acc: f64) -> Result<f64> {
    if confidences.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    Ok(confidences.iter().sum::<f64>() / confidences.len() as f64 - acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub name: String,
    pub acc: f64,
    pub mean_confidence: f64,
    pub calib_shift: f64,
    pub n: usize,
}

impl RunMetrics {
    pub fn compute(name: &str, samples: &[SampleMetrics], mode: AccuracyMode) -> Result<Self> {
        let acc = accuracy(samples, mode)?;
        let mean_confidence = mean_confidence(samples)?;
        Ok(Self {
            name: name.to_string(),
            acc,
            mean_confidence,
            calib_shift: mean_confidence - acc,
            n: samples.len(),
        })
    }
}

/// Accuracy falls from L0 to L2 while the calibration shift does not.
pub fn intra_model_dke(acc_l0: f64, acc_l2: f64, delta_l0: f64, delta_l2: f64) -> bool {
    acc_l0 > acc_l2 && delta_l0 <= delta_l2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterModelDke {
    /// Ordered pairs `(i, j)` where model i is less accurate yet more
    /// overconfident than model j.
    pub flagged: Vec<(usize, usize)>,
    pub ordered_pairs: usize,
    pub fraction: f64,
}

pub fn inter_model_dke(models: &[(f64, f64)]) -> Result<InterModelDke> {
    if models.len() < 2 {
        return Err(Error::Empty("model comparison needs at least two models"));
    }
    let mut flagged = Vec::new();
    for (i, &(acc_i, d_i)) in models.iter().enumerate() {
        for (j, &(acc_j, d_j)) in models.iter().enumerate() {
            if i != j && acc_i < acc_j && d_i > d_j {
                flagged.push((i, j));
            }
        }
    }
    let ordered_pairs = models.len() * (models.len() - 1);
    Ok(InterModelDke {
        fraction: flagged.len() as f64 / ordered_pairs as f64,
        flagged,
        ordered_pairs,
    })
}
