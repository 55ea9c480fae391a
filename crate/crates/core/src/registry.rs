//! Severity calibration and operator dispatch.
//!
//! A [`SeverityTable`] maps each degradation type to a continuous slider
//! `t ∈ [0, 1]` whose origin is the identity and whose L1/L2 points are the
//! calibrated defaults. [`apply_degradation`] turns a [`DegradationSpec`] into
//! a call on the concrete operator.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::degrade::{ct, general, mri, pathology};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{DegradationSpec, DegradationType, Modality, Params, Severity};

const DEFAULT_TABLE: &str = include_str!("../config/severity.toml");

/// Interpolation knots of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knots {
    pub identity: f64,
    pub l1: f64,
    pub l2: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub integer: bool,
}

impl Knots {
    fn monotone(&self) -> bool {
        let v = [self.identity, self.l1, self.l2, self.max];
        v.windows(2).all(|w| w[0] <= w[1]) || v.windows(2).all(|w| w[0] >= w[1])
    }
}

/// Slider positions of L1 and L2 for one (type, modality) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub t_l1: f64,
    pub t_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeEntry {
    pub t_l1: f64,
    pub t_l2: f64,
    pub params: BTreeMap<String, Knots>,
    /// Annotator-derived slider positions that replace `t_l1`/`t_l2` for
    /// specific modalities.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub modality: BTreeMap<Modality, Thresholds>,
}

impl TypeEntry {
    fn thresholds(&self, modality: Option<Modality>) -> Thresholds {
        modality
            .and_then(|m| self.modality.get(&m).copied())
            .unwrap_or(Thresholds {
                t_l1: self.t_l1,
                t_l2: self.t_l2,
            })
    }

    /// Piecewise-linear interpolation through the four knots.
    fn at(&self, t: f64) -> Params {
        self.params
            .iter()
            .map(|(name, k)| {
                let pts = [(0.0, k.identity), (self.t_l1, k.l1), (self.t_l2, k.l2), (1.0, k.max)];
                let mut v = k.max;
                for w in pts.windows(2) {
                    let ((t0, v0), (t1, v1)) = (w[0], w[1]);
                    if t <= t1 {
                        v = if t1 > t0 { v0 + (v1 - v0) * (t - t0) / (t1 - t0) } else { v1 };
                        break;
                    }
                }
                if t == 0.0 {
                    v = k.identity;
                }
                if k.integer {
                    v = v.round();
                }
                (name.clone(), v)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SeverityTable {
    entries: BTreeMap<DegradationType, TypeEntry>,
}

impl Default for SeverityTable {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TABLE).expect("bundled severity table is valid")
    }
}

impl SeverityTable {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: SeverityTable = toml::from_str(text)?;
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("severity table serializes")
    }

    pub fn validate(&self) -> Result<()> {
        for t in DegradationType::ALL {
            let entry = self
                .entries
                .get(&t)
                .ok_or_else(|| Error::SeverityTable(format!("missing entry for `{t}`")))?;
            let mut all = vec![Thresholds {
                t_l1: entry.t_l1,
                t_l2: entry.t_l2,
            }];
            all.extend(entry.modality.values().copied());
            for th in all {
                if !(0.0 < th.t_l1 && th.t_l1 < th.t_l2 && th.t_l2 <= 1.0) {
                    return Err(Error::SeverityTable(format!(
                        "`{t}`: need 0 < t_l1 < t_l2 <= 1, got {} / {}",
                        th.t_l1, th.t_l2
                    )));
                }
            }
            if entry.params.is_empty() {
                return Err(Error::SeverityTable(format!("`{t}` has no parameters")));
            }
            for (name, k) in &entry.params {
                if !k.monotone() {
                    return Err(Error::SeverityTable(format!(
                        "`{t}.{name}` knots are not monotone"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn entry(&self, kind: DegradationType) -> &TypeEntry {
        &self.entries[&kind]
    }

    pub fn set_modality_thresholds(
        &mut self,
        kind: DegradationType,
        modality: Modality,
        thresholds: Thresholds,
    ) -> Result<()> {
        if !(0.0 < thresholds.t_l1 && thresholds.t_l1 < thresholds.t_l2 && thresholds.t_l2 <= 1.0) {
            return Err(Error::SeverityTable(format!(
                "`{kind}` / {modality}: need 0 < t_l1 < t_l2 <= 1"
            )));
        }
        self.entries
            .get_mut(&kind)
            .expect("table covers every type")
            .modality
            .insert(modality, thresholds);
        Ok(())
    }

    /// Parameters at slider position `t`; `t = 0` is the identity point.
    pub fn params_at(&self, kind: DegradationType, t: f64) -> Result<Params> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::param("t", format!("{t} is outside [0, 1]")));
        }
        Ok(self.entry(kind).at(t))
    }

    pub fn identity_params(&self, kind: DegradationType) -> Params {
        self.entry(kind).at(0.0)
    }

    pub fn severity_params(&self, kind: DegradationType, severity: Severity) -> Params {
        self.level_params(kind, severity, None)
    }

    /// Level parameters, honouring per-modality thresholds when present.
    pub fn level_params(
        &self,
        kind: DegradationType,
        severity: Severity,
        modality: Option<Modality>,
    ) -> Params {
        let entry = self.entry(kind);
        let th = entry.thresholds(modality);
        match severity {
            Severity::L0 => entry.at(0.0),
            Severity::L1 => entry.at(th.t_l1),
            Severity::L2 => entry.at(th.t_l2),
        }
    }

    pub fn thresholds(&self, kind: DegradationType, modality: Option<Modality>) -> Thresholds {
        self.entry(kind).thresholds(modality)
    }
}

/// Looks up level parameters by type name in the bundled table.
pub fn severity_params(type_name: &str, severity: Severity) -> Result<Params> {
    let kind: DegradationType = type_name.parse()?;
    Ok(SeverityTable::default().severity_params(kind, severity))
}

/// Degradation types applicable to `modality`, in taxonomy order.
pub fn compatible_types(modality: Modality) -> Vec<DegradationType> {
    DegradationType::ALL
        .into_iter()
        .filter(|t| t.supports(modality))
        .collect()
}

/// Reproducible per-sample seed derived from the sample's identity.
pub fn sample_seed(pair_id: &str, kind: Option<DegradationType>, severity: Severity, run_seed: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(pair_id.as_bytes());
    h.update([0]);
    h.update(kind.map_or("none", |k| k.name()).as_bytes());
    h.update([0]);
    h.update(severity.as_str().as_bytes());
    h.update([0]);
    h.update(run_seed.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Fills in seed-derived choices (directions, angles, bias coefficients)
/// that the table leaves open. Keys already present are kept, so a resolved
/// spec re-applies exactly.
pub fn resolve_params(kind: DegradationType, params: &Params, seed: u64) -> Result<Params> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut out = params.clone();
    let sign = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    match kind {
        DegradationType::MotionBlur => {
            let a = rng.random_range(0.0..180.0);
            if !out.contains("angle_deg") {
                out.insert("angle_deg", a);
            }
        }
        DegradationType::AdjustBrightness
        | DegradationType::Exposure
        | DegradationType::ObjectRotation => {
            let s = sign(&mut rng);
            if !out.contains("direction") {
                out.insert("direction", s);
            }
        }
        DegradationType::ObjectMovement => {
            let a = rng.random_range(0.0..360.0);
            if !out.contains("angle_deg") {
                out.insert("angle_deg", a);
            }
        }
        DegradationType::BiasField => {
            let order = out.require_int("order")?.max(0) as usize;
            let scale = out.require("coeff_scale")?;
            let n = mri::basis_size(order);
            for j in 0..n {
                let u: f64 = rng.random_range(-1.0..1.0);
                let key = format!("coeff_{j}");
                if !out.contains(&key) {
                    // The constant term would only rescale the image globally.
                    out.insert(&key, if j == 0 { 0.0 } else { u * scale });
                }
            }
        }
        _ => {}
    }
    Ok(out)
}

fn direction(params: &Params) -> Result<f64> {
    let d = params.get("direction").unwrap_or(1.0);
    if d != 1.0 && d != -1.0 {
        return Err(Error::param("direction", "must be +1 or -1"));
    }
    Ok(d)
}

fn positive_int(params: &Params, name: &str) -> Result<usize> {
    let v = params.require_int(name)?;
    if v < 0 {
        return Err(Error::param(name, "must be non-negative"));
    }
    Ok(v as usize)
}

/// Runs the concrete operator for a resolved parameter set.
pub fn dispatch(img: &Image, kind: DegradationType, params: &Params, seed: u64) -> Result<Image> {
    use DegradationType as T;
    let p = params;
    match kind {
        T::GaussianNoise => general::gaussian_noise(img, p.require("sigma")?, seed),
        T::GaussianBlur => general::gaussian_blur(img, p.require("sigma")?),
        T::MotionBlur => general::motion_blur(
            img,
            positive_int(p, "length")?,
            p.get("angle_deg").unwrap_or(0.0),
        ),
        T::LowResolution => general::low_resolution(img, positive_int(p, "factor")?),
        T::AdjustBrightness => general::adjust_brightness(img, direction(p)? * p.require("delta")?),
        T::Exposure => {
            let gamma = p.require("gamma")?;
            let gamma = if direction(p)? < 0.0 { 1.0 / gamma } else { gamma };
            general::gamma_exposure(img, gamma)
        }
        T::ReduceContrast => general::reduce_contrast(img, p.require("alpha")?),
        T::ObjectRotation => general::rotate_image(img, direction(p)? * p.require("degrees")?, 0.0),
        T::ObjectMovement => {
            let frac = p.require("shift_frac")?;
            let (s, c) = p.get("angle_deg").unwrap_or(0.0).to_radians().sin_cos();
            let dx = frac * img.width() as f64 * c;
            let dy = frac * img.height() as f64 * s;
            general::translate_image(img, dx, dy, 0.0)
        }
        T::SparseView => ct::sparse_view(img, positive_int(p, "stride")?, positive_int(p, "views")?),
        T::LimitedAngle => ct::limited_angle(img, p.require("arc_deg")?, positive_int(p, "views")?),
        T::LowDose => {
            let inv = p.require("inv_photons")?;
            if inv == 0.0 {
                return Ok(img.clone());
            }
            if inv < 0.0 {
                return Err(Error::param("inv_photons", "must be >= 0"));
            }
            ct::low_dose(img, 1.0 / inv, seed, positive_int(p, "views")?)
        }
        T::Undersampling => mri::undersample_kspace(img, p.require("retain")?, p.require("acs")?, seed),
        T::Ghosting => mri::ghosting(
            img,
            positive_int(p, "num_ghosts")?,
            p.require("intensity")?,
            mri::Axis::Rows,
        ),
        T::BiasField => {
            let order = positive_int(p, "order")?;
            let coeffs = (0..mri::basis_size(order))
                .map(|j| p.require(&format!("coeff_{j}")))
                .collect::<Result<Vec<_>>>()?;
            mri::bias_field(img, &coeffs, order)
        }
        T::BloodCell | T::DarkSpots | T::Bubble => {
            let side = img.width().min(img.height()) as f64;
            let overlay = pathology::Overlay {
                kind: match kind {
                    T::BloodCell => pathology::OverlayKind::BloodCell,
                    T::DarkSpots => pathology::OverlayKind::DarkSpot,
                    _ => pathology::OverlayKind::Bubble,
                },
                count: positive_int(p, "count")?,
                radius_min: (p.require("radius_min_frac")? * side).max(1.0),
                radius_max: (p.require("radius_max_frac")? * side).max(1.0),
                opacity: p.require("opacity")?,
            };
            pathology::overlay_artifact(img, &overlay, seed)
        }
    }
}

/// Applies a degradation spec to an image of the given modality. L0 specs
/// return the input unchanged.
pub fn apply_degradation(img: &Image, modality: Modality, spec: &DegradationSpec) -> Result<Image> {
    let Some(kind) = spec.kind else {
        return Ok(img.clone());
    };
    if !kind.supports(modality) {
        return Err(Error::Incompatible { kind, modality });
    }
    if spec.severity == Severity::L0 {
        return Ok(img.clone());
    }
    let params = resolve_params(kind, &spec.params, spec.seed)?;
    dispatch(img, kind, &params, spec.seed)
}
