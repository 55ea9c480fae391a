//! Medical image degradation operators, benchmark manifests, and the
//! metrics used to score multimodal models on degraded inputs.

pub mod degrade;
pub mod error;
pub mod eval;
pub mod image;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod phantom;
pub mod pipeline;
pub mod registry;
pub mod report;
pub mod review;
pub mod synth;

pub use error::{Error, Result};
pub use eval::{extract_answer, render_prompt, Trial, TrialRecord};
pub use image::Image;
pub use manifest::{validate_manifest, Manifest, Violation};
pub use metrics::{
    accuracy, calibration_shift, confidence, inter_model_dke, intra_model_dke, vote_distribution,
    AccuracyMode, RunMetrics, SampleMetrics, VoteDistribution,
};
pub use model::*;
pub use pipeline::{
    apply_review, assign_degradations, build_manifest, dedup_pool, PipelineConfig, ReviewAction,
    ReviewDecision, ReviewSummary,
};
pub use registry::{
    apply_degradation, compatible_types, resolve_params, sample_seed, severity_params, SeverityTable,
};
pub use report::{aggregate_report, Axis, Report};
pub use review::{ReviewStore, ThresholdLabel};
