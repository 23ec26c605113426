//! Logit-based scores. Inputs are one sample's logits; outputs are oriented
//! so that larger means more out-of-distribution.

use crate::error::{Error, Result};

fn check(logits: &[f64]) -> Result<()> {
    if logits.len() < 2 {
        return Err(Error::DimMismatch(format!(
            "need at least 2 logits, got {}",
            logits.len()
        )));
    }
    if let Some(col) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            field: "logits",
            row: 0,
            col,
        });
    }
    Ok(())
}

fn max_of(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `ln sum exp(x)` with max subtraction.
pub fn logsumexp(x: &[f64]) -> f64 {
    let m = max_of(x);
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Max softmax probability, `1 / sum exp(x - max)`.
fn max_softmax(x: &[f64]) -> f64 {
    let m = max_of(x);
    1.0 / x.iter().map(|v| (v - m).exp()).sum::<f64>()
}

pub(crate) fn msp_unchecked(x: &[f64]) -> f64 {
    1.0 - max_softmax(x)
}

pub(crate) fn entropy_unchecked(x: &[f64]) -> f64 {
    let m = max_of(x);
    let shifted: Vec<f64> = x.iter().map(|v| v - m).collect();
    let total: f64 = shifted.iter().map(|z| z.exp()).sum();
    let log_total = total.ln();
    // H = -sum p (z - ln total) with p = exp(z) / total; p -> 0 terms vanish.
    -shifted
        .iter()
        .map(|&z| {
            let p = z.exp() / total;
            if p == 0.0 {
                0.0
            } else {
                p * (z - log_total)
            }
        })
        .sum::<f64>()
}

pub(crate) fn maxlogit_unchecked(x: &[f64]) -> f64 {
    -max_of(x)
}

pub(crate) fn energy_unchecked(x: &[f64], temperature: f64) -> f64 {
    let scaled: Vec<f64> = x.iter().map(|v| v / temperature).collect();
    -temperature * logsumexp(&scaled)
}

pub(crate) fn odin_unchecked(x: &[f64], temperature: f64) -> f64 {
    let scaled: Vec<f64> = x.iter().map(|v| v / temperature).collect();
    msp_unchecked(&scaled)
}

fn check_temperature(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "temperature must be positive and finite, got {t}"
        )))
    }
}

/// `1 - max_c softmax(x)_c`.
pub fn score_msp(logits: &[f64]) -> Result<f64> {
    check(logits)?;
    Ok(msp_unchecked(logits))
}

/// Shannon entropy (natural log) of `softmax(x)`.
pub fn score_entropy(logits: &[f64]) -> Result<f64> {
    check(logits)?;
    Ok(entropy_unchecked(logits))
}

/// `-max_c x_c`.
pub fn score_maxlogit(logits: &[f64]) -> Result<f64> {
    check(logits)?;
    Ok(maxlogit_unchecked(logits))
}

/// Energy `-T ln sum exp(x / T)`.
pub fn score_energy(logits: &[f64], temperature: f64) -> Result<f64> {
    check(logits)?;
    check_temperature(temperature)?;
    Ok(energy_unchecked(logits, temperature))
}

/// Temperature-scaled MSP, `1 - max_c softmax(x / T)_c`. No input
/// perturbation is applied.
pub fn score_odin(logits: &[f64], temperature: f64) -> Result<f64> {
    check(logits)?;
    check_temperature(temperature)?;
    Ok(odin_unchecked(logits, temperature))
}
