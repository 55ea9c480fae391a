//! Degradation operators grouped by the imaging physics they model.

pub mod ct;
pub mod general;
pub mod mri;
pub mod pathology;

pub use ct::{fbp_reconstruct, limited_angle, low_dose, radon_forward, sparse_view, Sinogram};
pub use general::{
    adjust_brightness, gamma_exposure, gaussian_blur, gaussian_noise, low_resolution, motion_blur,
    reduce_contrast, rotate_image, translate_image,
};
pub use mri::{bias_field, ghosting, kspace_forward, kspace_inverse, undersample_kspace, Axis, KSpace};
pub use pathology::{overlay_artifact, Overlay, OverlayKind};
