//! Text form of augmentation specs.
//!
//! ```text
//! spec   := "none" | op ("+" op)*
//! op     := "hflip" | "vflip" | "equalize" | "invert" | "jitter" [ "(" params ")" ]
//! params := key "=" value ("," key "=" value)*      keys: b c s h seed
//! value  := number | number ":" number              (a range to sample from)
//! ```
//!
//! A bare `jitter` uses the default ranges; inside parentheses, omitted
//! factors default to the identity.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default brightness/contrast/saturation range for a bare `jitter`.
pub const DEFAULT_FACTOR_RANGE: (f64, f64) = (0.6, 1.4);
/// Default hue shift range (degrees) for a bare `jitter`.
pub const DEFAULT_HUE_RANGE: (f64, f64) = (-10.0, 10.0);

/// A jitter parameter: either used as-is or drawn uniformly from `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum JitterParam {
    Fixed(f64),
    Range(f64, f64),
}

impl JitterParam {
    fn bounds(self) -> (f64, f64) {
        match self {
            JitterParam::Fixed(v) => (v, v),
            JitterParam::Range(lo, hi) => (lo, hi),
        }
    }

    fn resolve(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            JitterParam::Fixed(v) => v,
            JitterParam::Range(lo, hi) => {
                let u: f64 = rng.random();
                lo + (hi - lo) * u
            }
        }
    }
}

impl fmt::Display for JitterParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JitterParam::Fixed(v) => write!(f, "{v}"),
            JitterParam::Range(lo, hi) => write!(f, "{lo}:{hi}"),
        }
    }
}

/// Colour-jitter parameters as written in a spec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterSpec {
    pub brightness: JitterParam,
    pub contrast: JitterParam,
    pub saturation: JitterParam,
    /// Degrees.
    pub hue: JitterParam,
    /// Seed for drawing ranged parameters; `None` means 0 unless a caller
    /// fills it in with [`AugmentationSpec::with_default_seed`].
    pub seed: Option<u64>,
}

/// Concrete factors after resolving any ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterFactors {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue_degrees: f64,
}

impl JitterFactors {
    pub const IDENTITY: JitterFactors = JitterFactors {
        brightness: 1.0,
        contrast: 1.0,
        saturation: 1.0,
        hue_degrees: 0.0,
    };
}

impl JitterSpec {
    pub fn identity() -> Self {
        Self::fixed(1.0, 1.0, 1.0, 0.0)
    }

    pub fn fixed(brightness: f64, contrast: f64, saturation: f64, hue: f64) -> Self {
        Self {
            brightness: JitterParam::Fixed(brightness),
            contrast: JitterParam::Fixed(contrast),
            saturation: JitterParam::Fixed(saturation),
            hue: JitterParam::Fixed(hue),
            seed: None,
        }
    }

    /// The moderate default perturbation used by a bare `jitter`.
    pub fn default_ranges() -> Self {
        let (lo, hi) = DEFAULT_FACTOR_RANGE;
        let (hlo, hhi) = DEFAULT_HUE_RANGE;
        Self {
            brightness: JitterParam::Range(lo, hi),
            contrast: JitterParam::Range(lo, hi),
            saturation: JitterParam::Range(lo, hi),
            hue: JitterParam::Range(hlo, hhi),
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("b", self.brightness),
            ("c", self.contrast),
            ("s", self.saturation),
        ] {
            let (lo, hi) = p.bounds();
            if !lo.is_finite() || !hi.is_finite() || lo < 0.0 || hi < lo {
                return Err(Error::InvalidParameter(format!(
                    "jitter factor {name}={p} must be finite, non-negative, lo <= hi"
                )));
            }
        }
        let (lo, hi) = self.hue.bounds();
        if !lo.is_finite() || !hi.is_finite() || lo < -180.0 || hi > 180.0 || hi < lo {
            return Err(Error::InvalidParameter(format!(
                "jitter hue shift h={} must lie in [-180, 180]",
                self.hue
            )));
        }
        Ok(())
    }

    /// Draws ranged parameters in the order b, c, s, h from a ChaCha8 stream
    /// seeded with `seed`; fixed parameters consume no randomness.
    pub fn resolve(&self) -> JitterFactors {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.unwrap_or(0));
        JitterFactors {
            brightness: self.brightness.resolve(&mut rng),
            contrast: self.contrast.resolve(&mut rng),
            saturation: self.saturation.resolve(&mut rng),
            hue_degrees: self.hue.resolve(&mut rng),
        }
    }
}

/// One primitive pixel-space transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AugOp {
    HFlip,
    VFlip,
    ColorJitter(JitterSpec),
    Equalize,
    Invert,
}

/// Ordered list of primitives applied left to right. Empty = identity view.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub ops: Vec<AugOp>,
}

impl AugmentationSpec {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(ops: Vec<AugOp>) -> Result<Self> {
        let spec = Self { ops };
        spec.validate()?;
        Ok(spec)
    }

    pub fn is_identity(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for op in &self.ops {
            if let AugOp::ColorJitter(j) = op {
                j.validate()?;
            }
        }
        Ok(())
    }

    /// Fills in `seed` for every jitter op that does not carry its own.
    pub fn with_default_seed(mut self, seed: u64) -> Self {
        for op in &mut self.ops {
            if let AugOp::ColorJitter(j) = op {
                j.seed.get_or_insert(seed);
            }
        }
        self
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_spec(text)
    }

    pub fn render(&self) -> String {
        render_spec(self)
    }
}

impl fmt::Display for AugmentationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_spec(self))
    }
}

impl std::str::FromStr for AugmentationSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_spec(s)
    }
}

pub fn render_spec(spec: &AugmentationSpec) -> String {
    if spec.ops.is_empty() {
        return "none".to_string();
    }
    spec.ops
        .iter()
        .map(|op| match op {
            AugOp::HFlip => "hflip".to_string(),
            AugOp::VFlip => "vflip".to_string(),
            AugOp::Equalize => "equalize".to_string(),
            AugOp::Invert => "invert".to_string(),
            AugOp::ColorJitter(j) => {
                let mut s = format!(
                    "jitter(b={},c={},s={},h={}",
                    j.brightness, j.contrast, j.saturation, j.hue
                );
                if let Some(seed) = j.seed {
                    s.push_str(&format!(",seed={seed}"));
                }
                s.push(')');
                s
            }
        })
        .collect::<Vec<_>>()
        .join("+")
}

pub fn parse_spec(text: &str) -> Result<AugmentationSpec> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::SpecParse("empty augmentation spec".into()));
    }
    if text == "none" {
        return Ok(AugmentationSpec::identity());
    }
    let ops = split_top_level(text)?
        .into_iter()
        .map(parse_op)
        .collect::<Result<Vec<_>>>()?;
    AugmentationSpec::new(ops)
}

/// Splits on `+` outside parentheses, so exponents like `1e+2` survive.
fn split_top_level(text: &str) -> Result<Vec<&str>> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in text.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(Error::SpecParse(format!("unbalanced ')' in '{text}'")));
                }
            }
            '+' if depth == 0 => {
                parts.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::SpecParse(format!("unbalanced '(' in '{text}'")));
    }
    parts.push(&text[start..]);
    Ok(parts)
}

fn parse_op(token: &str) -> Result<AugOp> {
    let token = token.trim();
    let (name, params) = match token.find('(') {
        Some(open) => {
            if !token.ends_with(')') {
                return Err(Error::SpecParse(format!(
                    "'{token}': parameters must end with ')'"
                )));
            }
            (token[..open].trim(), Some(&token[open + 1..token.len() - 1]))
        }
        None => (token, None),
    };
    let simple = |op: AugOp| match params {
        Some(_) => Err(Error::SpecParse(format!("'{name}' takes no parameters"))),
        None => Ok(op),
    };
    match name {
        "hflip" => simple(AugOp::HFlip),
        "vflip" => simple(AugOp::VFlip),
        "equalize" => simple(AugOp::Equalize),
        "invert" => simple(AugOp::Invert),
        "jitter" => Ok(AugOp::ColorJitter(parse_jitter(params)?)),
        "" => Err(Error::SpecParse("empty augmentation op".into())),
        "none" => Err(Error::SpecParse(
            "'none' cannot be combined with other ops".into(),
        )),
        other => Err(Error::SpecParse(format!("unknown augmentation op '{other}'"))),
    }
}

fn parse_jitter(params: Option<&str>) -> Result<JitterSpec> {
    let params = match params.map(str::trim) {
        None | Some("") => return Ok(JitterSpec::default_ranges()),
        Some(p) => p,
    };
    let mut spec = JitterSpec::identity();
    let mut seen: Vec<&str> = Vec::new();
    for pair in params.split(',') {
        let (key, value) = pair
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::SpecParse(format!("jitter parameter '{pair}' is not key=value")))?;
        if seen.contains(&key) {
            return Err(Error::SpecParse(format!("duplicate jitter parameter '{key}'")));
        }
        seen.push(key);
        match key {
            "b" => spec.brightness = parse_param(key, value)?,
            "c" => spec.contrast = parse_param(key, value)?,
            "s" => spec.saturation = parse_param(key, value)?,
            "h" => spec.hue = parse_param(key, value)?,
            "seed" => {
                spec.seed = Some(value.parse().map_err(|_| {
                    Error::SpecParse(format!("seed '{value}' is not a non-negative integer"))
                })?)
            }
            other => {
                return Err(Error::SpecParse(format!(
                    "unknown jitter parameter '{other}' (expected b, c, s, h, seed)"
                )))
            }
        }
    }
    Ok(spec)
}

fn parse_param(key: &str, value: &str) -> Result<JitterParam> {
    let num = |s: &str| -> Result<f64> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::SpecParse(format!("{key}: '{s}' is not a number")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::SpecParse(format!("{key}: '{s}' is not finite")))
        }
    };
    match value.split_once(':') {
        Some((lo, hi)) => Ok(JitterParam::Range(num(lo)?, num(hi)?)),
        None => Ok(JitterParam::Fixed(num(value)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_flip_chain() {
        let spec = parse_spec("hflip+vflip").unwrap();
        assert_eq!(spec.ops, vec![AugOp::HFlip, AugOp::VFlip]);
    }

    #[test]
    fn parses_jitter_record() {
        let spec = parse_spec("jitter(b=0.4,c=0.4,s=0.4,h=10,seed=7)").unwrap();
        assert_eq!(
            spec.ops,
            vec![AugOp::ColorJitter(JitterSpec {
                brightness: JitterParam::Fixed(0.4),
                contrast: JitterParam::Fixed(0.4),
                saturation: JitterParam::Fixed(0.4),
                hue: JitterParam::Fixed(10.0),
                seed: Some(7),
            })]
        );
    }

    #[test]
    fn bad_token_is_named() {
        let err = parse_spec("hflp").unwrap_err().to_string();
        assert!(err.contains("hflp"), "{err}");
        let err = parse_spec("hflip+vflp").unwrap_err().to_string();
        assert!(err.contains("vflp"), "{err}");
    }

    #[test]
    fn none_and_bare_jitter() {
        assert!(parse_spec("none").unwrap().is_identity());
        assert_eq!(render_spec(&AugmentationSpec::identity()), "none");
        let spec = parse_spec("jitter").unwrap();
        assert_eq!(spec.ops, vec![AugOp::ColorJitter(JitterSpec::default_ranges())]);
    }

    #[test]
    fn rejects_out_of_range_and_malformed() {
        for bad in [
            "jitter(b=-1)",
            "jitter(h=190)",
            "jitter(b=1.4:0.6)",
            "jitter(q=1)",
            "jitter(b=x)",
            "jitter(b=1,b=2)",
            "jitter(seed=-3)",
            "hflip(1)",
            "hflip+",
            "hflip+none",
            "jitter(b=1",
            "",
        ] {
            assert!(parse_spec(bad).is_err(), "{bad} should fail");
        }
    }

    #[test]
    fn ranged_factors_are_seeded() {
        let spec = parse_spec("jitter(b=0.6:1.4,c=0.6:1.4,s=1,h=-10:10,seed=3)").unwrap();
        let AugOp::ColorJitter(j) = spec.ops[0] else {
            unreachable!()
        };
        let a = j.resolve();
        assert_eq!(a, j.resolve());
        assert!((0.6..=1.4).contains(&a.brightness));
        assert!((-10.0..=10.0).contains(&a.hue_degrees));
        assert_eq!(a.saturation, 1.0);
        let other = JitterSpec { seed: Some(4), ..j }.resolve();
        assert_ne!(a, other);
    }

    fn arb_param(lo: f64, hi: f64) -> impl Strategy<Value = JitterParam> {
        prop_oneof![
            (lo..hi).prop_map(JitterParam::Fixed),
            (lo..hi, lo..hi).prop_map(|(a, b)| JitterParam::Range(a.min(b), a.max(b))),
        ]
    }

    fn arb_op() -> impl Strategy<Value = AugOp> {
        let jitter = (
            arb_param(0.0, 3.0),
            arb_param(0.0, 3.0),
            arb_param(0.0, 3.0),
            arb_param(-180.0, 180.0),
            proptest::option::of(any::<u64>()),
        )
            .prop_map(|(b, c, s, h, seed)| {
                AugOp::ColorJitter(JitterSpec {
                    brightness: b,
                    contrast: c,
                    saturation: s,
                    hue: h,
                    seed,
                })
            });
        prop_oneof![
            Just(AugOp::HFlip),
            Just(AugOp::VFlip),
            Just(AugOp::Equalize),
            Just(AugOp::Invert),
            jitter,
        ]
    }

    proptest! {
        #[test]
        fn render_then_parse_is_identity(ops in proptest::collection::vec(arb_op(), 0..5)) {
            let spec = AugmentationSpec::new(ops).unwrap();
            prop_assert_eq!(parse_spec(&render_spec(&spec)).unwrap(), spec);
        }
    }
}
