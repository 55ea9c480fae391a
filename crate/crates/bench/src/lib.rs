//! Shared fixtures for the criterion benches.

use medq_core::model::{DegradationSpec, DegradationType, Modality, Severity};
use medq_core::{resolve_params, Image, SeverityTable};

/// The L2 spec the pipeline would use for `kind` on `modality`.
pub fn l2_spec(kind: DegradationType, modality: Modality, seed: u64) -> DegradationSpec {
    let table = SeverityTable::default();
    let params = table.level_params(kind, Severity::L2, Some(modality));
    let params = resolve_params(kind, &params, seed).expect("bundled table resolves");
    DegradationSpec::new(kind, Severity::L2, params, seed)
}

/// A clean image of side `n` suited to `kind`.
pub fn image_for(kind: DegradationType, n: usize) -> (Modality, Image) {
    let m = kind.modalities()[0];
    (m, medq_core::synth::synthetic_image(m, n, 1))
}
