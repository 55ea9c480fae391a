//! Shared domain types: modalities, severities, the degradation taxonomy,
//! QA pairs and degraded samples.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "MRI")]
    Mri,
    #[serde(rename = "CT")]
    Ct,
    #[serde(rename = "XRay", alias = "X-ray", alias = "Xray")]
    XRay,
    Ultrasound,
    Dermoscopy,
    #[serde(alias = "Pathology")]
    Histopathology,
    Endoscopy,
}

impl Modality {
    pub const ALL: [Modality; 7] = [
        Modality::Mri,
        Modality::Ct,
        Modality::XRay,
        Modality::Ultrasound,
        Modality::Dermoscopy,
        Modality::Histopathology,
        Modality::Endoscopy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Mri => "MRI",
            Modality::Ct => "CT",
            Modality::XRay => "XRay",
            Modality::Ultrasound => "Ultrasound",
            Modality::Dermoscopy => "Dermoscopy",
            Modality::Histopathology => "Histopathology",
            Modality::Endoscopy => "Endoscopy",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match norm.as_str() {
            "mri" => Modality::Mri,
            "ct" => Modality::Ct,
            "xray" => Modality::XRay,
            "ultrasound" | "us" => Modality::Ultrasound,
            "dermoscopy" => Modality::Dermoscopy,
            "histopathology" | "pathology" => Modality::Histopathology,
            "endoscopy" => Modality::Endoscopy,
            _ => return Err(Error::UnknownModality(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    L0,
    L1,
    L2,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::L0, Severity::L1, Severity::L2];

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::L0 => "L0",
            Severity::L1 => "L1",
            Severity::L2 => "L2",
        }
    }

    pub fn level(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L0" | "0" => Ok(Severity::L0),
            "L1" | "1" => Ok(Severity::L1),
            "L2" | "2" => Ok(Severity::L2),
            _ => Err(Error::param("severity", format!("`{s}` is not one of L0, L1, L2"))),
        }
    }
}

/// Top-level degradation categories, in the column order of the
/// per-category report table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Intensity,
    Noise,
    #[serde(rename = "ResolutionBlur")]
    ResolutionBlur,
    Artifacts,
    Motion,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Intensity,
        Category::Noise,
        Category::ResolutionBlur,
        Category::Artifacts,
        Category::Motion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Intensity => "Intensity",
            Category::Noise => "Noise",
            Category::ResolutionBlur => "ResolutionBlur",
            Category::Artifacts => "Artifacts",
            Category::Motion => "Motion",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::param("category", format!("unknown category `{s}`")))
    }
}

macro_rules! degradation_types {
    ($( $variant:ident => $name:literal, $cat:ident, [$($m:ident),*] ; )*) => {
        /// The eighteen degradation variants of the benchmark taxonomy.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum DegradationType {
            $( #[serde(rename = $name)] $variant, )*
        }

        impl DegradationType {
            pub const ALL: [DegradationType; 18] = [ $( DegradationType::$variant, )* ];

            pub fn name(self) -> &'static str {
                match self { $( DegradationType::$variant => $name, )* }
            }

            pub fn category(self) -> Category {
                match self { $( DegradationType::$variant => Category::$cat, )* }
            }

            /// Modalities this type may be applied to. An empty list means
            /// the type is general (all modalities).
            fn restricted_to(self) -> &'static [Modality] {
                match self { $( DegradationType::$variant => &[$(Modality::$m),*], )* }
            }
        }
    };
}

degradation_types! {
    LimitedAngle => "limited_angle", Artifacts, [Ct];
    SparseView => "sparse_view", Artifacts, [Ct];
    BiasField => "bias_field_artifact", Artifacts, [Mri];
    Undersampling => "undersampling_artifact", Artifacts, [Mri];
    Ghosting => "ghosting_artifact", Artifacts, [Mri];
    BloodCell => "blood_cell_artifact", Artifacts, [Histopathology];
    DarkSpots => "dark_spots_artifact", Artifacts, [Histopathology];
    ObjectRotation => "object_rotation", Motion, [];
    ObjectMovement => "object_movement", Motion, [];
    AdjustBrightness => "adjust_brightness", Intensity, [];
    Exposure => "exposure", Intensity, [];
    ReduceContrast => "reduce_contrast", Intensity, [];
    GaussianNoise => "gaussian_noise", Noise, [];
    LowDose => "low_dose", Noise, [Ct];
    LowResolution => "low_resolution", ResolutionBlur, [];
    MotionBlur => "motion_blur", ResolutionBlur, [];
    GaussianBlur => "gaussian_blur", ResolutionBlur, [];
    Bubble => "bubble", ResolutionBlur, [Histopathology];
}

impl DegradationType {
    pub fn is_general(self) -> bool {
        self.restricted_to().is_empty()
    }

    pub fn modalities(self) -> Vec<Modality> {
        if self.is_general() {
            Modality::ALL.to_vec()
        } else {
            self.restricted_to().to_vec()
        }
    }

    pub fn supports(self, modality: Modality) -> bool {
        self.is_general() || self.restricted_to().contains(&modality)
    }
}

impl fmt::Display for DegradationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DegradationType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DegradationType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownType(s.to_string()))
    }
}

/// Named operator parameters, ordered by name so serialization is stable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Params(BTreeMap<String, f64>);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.insert(name, value);
        self
    }

    pub fn insert(&mut self, name: &str, value: f64) {
        self.0.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn require(&self, name: &str) -> Result<f64> {
        let v = self.get(name).ok_or_else(|| Error::MissingParam(name.to_string()))?;
        if !v.is_finite() {
            return Err(Error::param(name, "must be finite"));
        }
        Ok(v)
    }

    pub fn require_int(&self, name: &str) -> Result<i64> {
        let v = self.require(name)?;
        if v.fract() != 0.0 {
            return Err(Error::param(name, format!("{v} is not an integer")));
        }
        Ok(v as i64)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(String, f64)> for Params {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// One applied corruption. `kind` is `None` for the clean (L0) reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    #[serde(rename = "type")]
    pub kind: Option<DegradationType>,
    pub severity: Severity,
    pub params: Params,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn identity() -> Self {
        Self {
            kind: None,
            severity: Severity::L0,
            params: Params::new(),
            seed: 0,
        }
    }

    pub fn new(kind: DegradationType, severity: Severity, params: Params, seed: u64) -> Self {
        Self {
            kind: Some(kind),
            severity,
            params,
            seed,
        }
    }

    pub fn category(&self) -> Option<Category> {
        self.kind.map(DegradationType::category)
    }
}

/// Three-level capability path. Only used as report metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Capability {
    pub high: String,
    pub mid: String,
    pub fine: String,
}

/// Mid-level capabilities in report column order.
pub const MID_CAPABILITIES: [&str; 6] = [
    "Clinical Understanding",
    "Imaging Perception",
    "Anatomical Recognition",
    "Basic Science Reasoning",
    "Diagnosis Reasoning",
    "Treatment Reasoning",
];

pub fn option_label(index: usize) -> char {
    assert!(index < 26);
    (b'A' + index as u8) as char
}

pub fn label_index(label: &str) -> Option<usize> {
    let mut chars = label.chars();
    match (chars.next(), chars.next()) {
        (Some(c @ 'A'..='Z'), None) => Some((c as u8 - b'A') as usize),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub pair_id: String,
    pub image_path: String,
    pub question: String,
    pub options: Vec<String>,
    pub answer: String,
    pub modality: Modality,
    #[serde(default)]
    pub capability: Capability,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl QaPair {
    /// Checks option count and the ground-truth label.
    pub fn validate(&self) -> Result<()> {
        let k = self.options.len();
        let fail = |reason: String| {
            Err(Error::InvalidRecord {
                id: self.pair_id.clone(),
                reason,
            })
        };
        if !(2..=26).contains(&k) {
            return fail(format!("{k} options; expected between 2 and 26"));
        }
        match label_index(&self.answer) {
            Some(i) if i < k => Ok(()),
            _ => fail(format!(
                "answer `{}` is not one of A..{}",
                self.answer,
                option_label(k - 1)
            )),
        }
    }

    pub fn answer_index(&self) -> Option<usize> {
        label_index(&self.answer).filter(|&i| i < self.options.len())
    }
}

/// The five mandatory discard criteria applied by expert reviewers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiscardReason {
    #[serde(rename = "poor_baseline")]
    PoorBaseline,
    #[serde(rename = "modality_mismatch")]
    ModalityMismatch,
    #[serde(rename = "severe_over_degradation")]
    SevereOverDegradation,
    #[serde(rename = "insufficient_L2")]
    InsufficientL2,
    #[serde(rename = "clinically_irrelevant")]
    ClinicallyIrrelevant,
}

impl DiscardReason {
    pub const ALL: [DiscardReason; 5] = [
        DiscardReason::PoorBaseline,
        DiscardReason::ModalityMismatch,
        DiscardReason::SevereOverDegradation,
        DiscardReason::InsufficientL2,
        DiscardReason::ClinicallyIrrelevant,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DiscardReason::PoorBaseline => "poor_baseline",
            DiscardReason::ModalityMismatch => "modality_mismatch",
            DiscardReason::SevereOverDegradation => "severe_over_degradation",
            DiscardReason::InsufficientL2 => "insufficient_L2",
            DiscardReason::ClinicallyIrrelevant => "clinically_irrelevant",
        }
    }
}

impl fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DiscardReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DiscardReason::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::param("reason", format!("`{s}` is not a discard criterion")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatusKind {
    Pending,
    Retained,
    Discarded,
}

/// Review state as it appears in a manifest record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewStatus {
    pub status: ReviewStatusKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<DiscardReason>,
}

impl ReviewStatus {
    pub const PENDING: ReviewStatus = ReviewStatus {
        status: ReviewStatusKind::Pending,
        reason: None,
    };
    pub const RETAINED: ReviewStatus = ReviewStatus {
        status: ReviewStatusKind::Retained,
        reason: None,
    };

    pub fn discarded(reason: DiscardReason) -> Self {
        Self {
            status: ReviewStatusKind::Discarded,
            reason: Some(reason),
        }
    }

    pub fn is_discarded(&self) -> bool {
        self.status == ReviewStatusKind::Discarded
    }
}

impl Default for ReviewStatus {
    fn default() -> Self {
        Self::PENDING
    }
}

/// Wire form of a [`DegradationSpec`]; `type` and `category` are null for
/// the clean reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationRecord {
    #[serde(rename = "type")]
    pub kind: Option<DegradationType>,
    pub category: Option<Category>,
    pub severity: Severity,
    pub params: Params,
    pub seed: u64,
}

impl From<&DegradationSpec> for DegradationRecord {
    fn from(spec: &DegradationSpec) -> Self {
        Self {
            kind: spec.kind,
            category: spec.category(),
            severity: spec.severity,
            params: spec.params.clone(),
            seed: spec.seed,
        }
    }
}

impl DegradationRecord {
    pub fn spec(&self) -> DegradationSpec {
        DegradationSpec {
            kind: self.kind,
            severity: self.severity,
            params: self.params.clone(),
            seed: self.seed,
        }
    }
}

/// A QA pair bound to one degradation spec: one manifest record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradedSample {
    pub sample_id: String,
    pub pair_id: String,
    pub image_path: String,
    pub question: String,
    pub options: Vec<String>,
    pub answer: String,
    pub modality: Modality,
    #[serde(default)]
    pub capability: Capability,
    pub degradation: DegradationRecord,
    #[serde(default)]
    pub review: ReviewStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Manifest schema version; absent means the current version.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
}

impl DegradedSample {
    pub fn new(pair: &QaPair, sample_id: String, spec: &DegradationSpec, image_path: String) -> Self {
        Self {
            sample_id,
            pair_id: pair.pair_id.clone(),
            image_path,
            question: pair.question.clone(),
            options: pair.options.clone(),
            answer: pair.answer.clone(),
            modality: pair.modality,
            capability: pair.capability.clone(),
            degradation: spec.into(),
            review: ReviewStatus::PENDING,
            source: pair.source.clone(),
            schema_version: None,
        }
    }

    pub fn severity(&self) -> Severity {
        self.degradation.severity
    }

    pub fn kind(&self) -> Option<DegradationType> {
        self.degradation.kind
    }

    pub fn category(&self) -> Option<Category> {
        self.degradation.kind.map(DegradationType::category)
    }

    /// The QA pair this sample was derived from, pointing at the sample's
    /// image.
    pub fn pair(&self) -> QaPair {
        QaPair {
            pair_id: self.pair_id.clone(),
            image_path: self.image_path.clone(),
            question: self.question.clone(),
            options: self.options.clone(),
            answer: self.answer.clone(),
            modality: self.modality,
            capability: self.capability.clone(),
            source: self.source.clone(),
        }
    }

    pub fn answer_index(&self) -> Option<usize> {
        label_index(&self.answer).filter(|&i| i < self.options.len())
    }
}

/// A named subset of the benchmark. Unset filter fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSet {
    pub name: String,
    #[serde(default)]
    pub severity: Option<Severity>,
    #[serde(default)]
    pub category: Option<Category>,
    #[serde(default)]
    pub modality: Option<Modality>,
    #[serde(default)]
    pub capability_mid: Option<String>,
}

impl EvalSet {
    pub fn all(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Self::default()
        }
    }

    pub fn at_severity(name: &str, severity: Severity) -> Self {
        Self {
            name: name.to_string(),
            severity: Some(severity),
            ..Self::default()
        }
    }

    pub fn matches(&self, sample: &DegradedSample) -> bool {
        self.severity.is_none_or(|s| s == sample.severity())
            && self.category.is_none_or(|c| sample.category() == Some(c))
            && self.modality.is_none_or(|m| m == sample.modality)
            && self
                .capability_mid
                .as_ref()
                .is_none_or(|c| c == &sample.capability.mid)
    }
}

/// Default sampling temperature for every evaluation run.
pub const DEFAULT_TEMPERATURE: f64 = 1.0;

/// A chat-completions-compatible model endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub name: String,
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub temperature: f64,
}

impl ModelEndpoint {
    pub fn new(name: &str, base_url: &str) -> Self {
        Self {
            name: name.to_string(),
            base_url: base_url.to_string(),
            api_key_env: "MEDQ_API_KEY".to_string(),
            timeout_ms: 60_000,
            max_retries: 3,
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}
