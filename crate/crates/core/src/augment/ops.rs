//! Primitive pixel operations. All are pure and dimension-preserving.

use super::image::ImageBuffer;
use super::spec::JitterFactors;
use crate::error::{Error, Result};

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

pub fn hflip(img: &ImageBuffer) -> ImageBuffer {
    let mut out = img.clone();
    let (w, h) = (img.width(), img.height());
    for y in 0..h {
        for x in 0..w {
            let src = img.offset(w - 1 - x, y);
            let dst = img.offset(x, y);
            out.pixels_mut()[dst..dst + 3].copy_from_slice(&img.pixels()[src..src + 3]);
        }
    }
    out
}

pub fn vflip(img: &ImageBuffer) -> ImageBuffer {
    let mut out = img.clone();
    let row = img.width() as usize * 3;
    let h = img.height() as usize;
    for y in 0..h {
        let src = (h - 1 - y) * row;
        out.pixels_mut()[y * row..(y + 1) * row].copy_from_slice(&img.pixels()[src..src + row]);
    }
    out
}

pub fn invert(img: &ImageBuffer) -> ImageBuffer {
    let mut out = img.clone();
    for v in out.pixels_mut() {
        *v = 255 - *v;
    }
    out
}

/// Per-channel histogram equalization, iterated to a fixed point.
///
/// One pass maps level `v` to
/// `round_half_up((cdf(v) - cdf_min) * 255 / (N - cdf_min))`, `cdf_min`
/// being the smallest non-zero cdf value; a constant channel
/// (`N == cdf_min`) is passed through. A pass is already stable unless it
/// sends a second level to 0, which changes `cdf_min` for the next pass
/// (possible once `N` exceeds about 510 pixels). Passes repeat until the
/// channel stops changing, so the result is idempotent. Each unstable pass
/// merges levels, hence at most 256 passes.
pub fn equalize(img: &ImageBuffer) -> ImageBuffer {
    let mut out = img.clone();
    for ch in 0..3 {
        let mut values: Vec<u8> = img.pixels().chunks_exact(3).map(|px| px[ch]).collect();
        loop {
            let next = equalize_pass(&values);
            if next == values {
                break;
            }
            values = next;
        }
        for (px, v) in out.pixels_mut().chunks_exact_mut(3).zip(values) {
            px[ch] = v;
        }
    }
    out
}

/// One equalization pass over a single channel, in integer arithmetic.
pub fn equalize_pass(values: &[u8]) -> Vec<u8> {
    let n = values.len() as u64;
    let mut hist = [0u64; 256];
    for &v in values {
        hist[v as usize] += 1;
    }
    let mut cdf = [0u64; 256];
    let mut acc = 0;
    for (v, count) in hist.iter().enumerate() {
        acc += count;
        cdf[v] = acc;
    }
    let Some(&cdf_min) = cdf.iter().find(|&&c| c > 0) else {
        return values.to_vec();
    };
    if cdf_min == n {
        return values.to_vec();
    }
    let den = n - cdf_min;
    let lut: Vec<u8> = cdf
        .iter()
        .map(|&c| {
            let num = c.saturating_sub(cdf_min) * 255;
            ((2 * num + den) / (2 * den)) as u8
        })
        .collect();
    values.iter().map(|&v| lut[v as usize]).collect()
}

/// Colour jitter with fixed factors, applied brightness -> contrast ->
/// saturation -> hue in f64, then clamped to [0, 255] and rounded half up.
///
/// * brightness: `p * b`
/// * contrast: `(p - g) * c + g`, `g` the image mean of
///   `round(0.299 R + 0.587 G + 0.114 B)`
/// * saturation: `q + (p - q) * s`, `q` the pixel's unrounded luma
/// * hue: HSV rotation by `hue_degrees` (values clamped to [0, 255] first)
///
/// Identity stages (factor 1, shift 0) are skipped so the all-identity
/// jitter is a bitwise no-op.
pub fn color_jitter(img: &ImageBuffer, f: &JitterFactors) -> Result<ImageBuffer> {
    for (name, v) in [
        ("brightness", f.brightness),
        ("contrast", f.contrast),
        ("saturation", f.saturation),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{name} factor must be finite and non-negative, got {v}"
            )));
        }
    }
    if !f.hue_degrees.is_finite() || f.hue_degrees.abs() > 180.0 {
        return Err(Error::InvalidParameter(format!(
            "hue shift must lie in [-180, 180], got {}",
            f.hue_degrees
        )));
    }

    let mut px: Vec<[f64; 3]> = img
        .pixels()
        .chunks_exact(3)
        .map(|p| [f64::from(p[0]), f64::from(p[1]), f64::from(p[2])])
        .collect();

    if f.brightness != 1.0 {
        for p in &mut px {
            for v in p.iter_mut() {
                *v *= f.brightness;
            }
        }
    }

    if f.contrast != 1.0 {
        let mean_gray =
            px.iter().map(|p| round_half_up(luma(p))).sum::<f64>() / px.len() as f64;
        for p in &mut px {
            for v in p.iter_mut() {
                *v = (*v - mean_gray) * f.contrast + mean_gray;
            }
        }
    }

    if f.saturation != 1.0 {
        for p in &mut px {
            let gray = luma(p);
            for v in p.iter_mut() {
                *v = gray + (*v - gray) * f.saturation;
            }
        }
    }

    if f.hue_degrees != 0.0 {
        for p in &mut px {
            let clamped = p.map(|v| v.clamp(0.0, 255.0));
            let (h, s, v) = rgb_to_hsv(clamped);
            *p = hsv_to_rgb((h + f.hue_degrees).rem_euclid(360.0), s, v);
        }
    }

    let mut out = img.clone();
    for (dst, p) in out.pixels_mut().chunks_exact_mut(3).zip(&px) {
        for (d, &v) in dst.iter_mut().zip(p) {
            *d = round_half_up(v.clamp(0.0, 255.0)) as u8;
        }
    }
    Ok(out)
}

fn luma(p: &[f64; 3]) -> f64 {
    LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2]
}

fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Hue in degrees [0, 360), saturation in [0, 1], value on the input scale.
fn rgb_to_hsv([r, g, b]: [f64; 3]) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}
