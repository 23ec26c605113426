//! Deterministic pixel-space augmentations and their composition.
//!
//! An [`AugmentationSpec`] is an ordered list of primitives; [`apply`] runs
//! them strictly left to right. Every primitive is a pure function of its
//! input image and parameters, so a spec plus a seed fully determines the
//! output bytes.

mod image;
mod ops;
mod spec;

pub use self::image::ImageBuffer;
pub use ops::{color_jitter, equalize, equalize_pass, hflip, invert, vflip};
pub use spec::{
    parse_spec, render_spec, AugOp, AugmentationSpec, JitterFactors, JitterParam, JitterSpec,
    DEFAULT_FACTOR_RANGE, DEFAULT_HUE_RANGE,
};

use crate::error::Result;

/// `x' = T(x)`: applies every primitive of `spec` in order.
pub fn apply(spec: &AugmentationSpec, img: &ImageBuffer) -> Result<ImageBuffer> {
    spec.validate()?;
    let mut out = img.clone();
    for op in &spec.ops {
        out = apply_op(op, &out)?;
    }
    Ok(out)
}

pub fn apply_op(op: &AugOp, img: &ImageBuffer) -> Result<ImageBuffer> {
    Ok(match op {
        AugOp::HFlip => hflip(img),
        AugOp::VFlip => vflip(img),
        AugOp::Invert => invert(img),
        AugOp::Equalize => equalize(img),
        AugOp::ColorJitter(j) => {
            j.validate()?;
            color_jitter(img, &j.resolve())?
        }
    })
}

/// Jitter factors each jitter op of `spec` resolves to, in op order.
pub fn resolved_jitter(spec: &AugmentationSpec) -> Vec<JitterFactors> {
    spec.ops
        .iter()
        .filter_map(|op| match op {
            AugOp::ColorJitter(j) => Some(j.resolve()),
            _ => None,
        })
        .collect()
}
