mod common;

use common::{random_image, rng};
use proptest::prelude::*;
use ttaood::augment::{
    apply, color_jitter, equalize, equalize_pass, hflip, invert, parse_spec, vflip, AugOp,
    AugmentationSpec, ImageBuffer, JitterFactors, JitterSpec,
};
use ttaood::Error;

fn img(w: u32, h: u32, px: &[[u8; 3]]) -> ImageBuffer {
    ImageBuffer::new(w, h, px.iter().flatten().copied().collect()).unwrap()
}

fn spec(text: &str) -> AugmentationSpec {
    parse_spec(text).unwrap()
}

fn arb_image() -> impl Strategy<Value = ImageBuffer> {
    (1u32..12, 1u32..12).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), (w * h * 3) as usize)
            .prop_map(move |px| ImageBuffer::new(w, h, px).unwrap())
    })
}

/// Per-channel histogram equalization evaluated straight from the formula,
/// one pass, in exact rational arithmetic.
fn equalize_formula(values: &[u8]) -> Vec<u8> {
    let n = values.len() as u64;
    let cdf = |v: u8| values.iter().filter(|&&x| x <= v).count() as u64;
    let cdf_min = values.iter().map(|&v| cdf(v)).min().unwrap();
    if cdf_min == n {
        return values.to_vec();
    }
    values
        .iter()
        .map(|&v| {
            let num = (cdf(v) - cdf_min) * 255;
            let den = n - cdf_min;
            // round half up of num / den
            ((num * 2 + den) / (den * 2)) as u8
        })
        .collect()
}

fn channel(img: &ImageBuffer, ch: usize) -> Vec<u8> {
    img.pixels().chunks_exact(3).map(|p| p[ch]).collect()
}

#[test]
fn flip_examples() {
    let (a, b) = ([1, 2, 3], [4, 5, 6]);
    assert_eq!(hflip(&img(2, 1, &[a, b])), img(2, 1, &[b, a]));
    assert_eq!(vflip(&img(1, 2, &[a, b])), img(1, 2, &[b, a]));
    let column = img(1, 3, &[a, b, a]);
    assert_eq!(hflip(&column), column);
    let row = img(3, 1, &[a, b, b]);
    assert_eq!(vflip(&row), row);
}

#[test]
fn invert_examples() {
    let px = img(1, 1, &[[0, 128, 255]]);
    assert_eq!(invert(&px).pixels(), &[255, 127, 0]);
}

#[test]
fn brightness_examples() {
    let f = JitterFactors {
        brightness: 2.0,
        ..JitterFactors::IDENTITY
    };
    assert_eq!(color_jitter(&img(1, 1, &[[100, 100, 100]]), &f).unwrap().pixels(), &[200, 200, 200]);
    assert_eq!(color_jitter(&img(1, 1, &[[200, 0, 0]]), &f).unwrap().pixels(), &[255, 0, 0]);
}

#[test]
fn equalize_examples() {
    let gray = ImageBuffer::filled(4, 3, [90, 90, 90]).unwrap();
    assert_eq!(equalize(&gray), gray);
    let two = img(2, 1, &[[0, 0, 0], [255, 255, 255]]);
    assert_eq!(equalize(&two), two);
}

#[test]
fn equalize_single_pass_matches_formula() {
    let mut r = rng(21);
    for _ in 0..200 {
        let im = random_image(&mut r, 24);
        for ch in 0..3 {
            let v = channel(&im, ch);
            assert_eq!(equalize_pass(&v), equalize_formula(&v));
        }
    }
}

#[test]
fn equalize_equals_formula_when_one_pass_is_stable() {
    let mut r = rng(22);
    for _ in 0..200 {
        let im = random_image(&mut r, 16);
        let eq = equalize(&im);
        for ch in 0..3 {
            let once = equalize_formula(&channel(&im, ch));
            if equalize_formula(&once) == once {
                assert_eq!(channel(&eq, ch), once);
            }
        }
    }
}

#[test]
fn composed_spec_matches_manual_composition() {
    let mut r = rng(23);
    for _ in 0..20 {
        let mut im = random_image(&mut r, 8);
        while im.width() != 8 || im.height() != 8 {
            im = random_image(&mut r, 8);
        }
        let out = apply(&spec("hflip+vflip+jitter(b=1.2,c=1.0,s=1.0,h=0)"), &im).unwrap();
        let f = JitterFactors {
            brightness: 1.2,
            ..JitterFactors::IDENTITY
        };
        let manual = color_jitter(&vflip(&hflip(&im)), &f).unwrap();
        assert_eq!(out, manual);
    }
}

#[test]
fn identity_views() {
    let mut r = rng(24);
    for _ in 0..50 {
        let im = random_image(&mut r, 16);
        assert_eq!(apply(&AugmentationSpec::identity(), &im).unwrap(), im);
        assert_eq!(apply(&spec("none"), &im).unwrap(), im);
        assert_eq!(color_jitter(&im, &JitterFactors::IDENTITY).unwrap(), im);
        assert_eq!(apply(&spec("jitter(b=1,c=1,s=1,h=0)"), &im).unwrap(), im);
    }
}

#[test]
fn parse_examples() {
    assert_eq!(spec("hflip+vflip").ops, vec![AugOp::HFlip, AugOp::VFlip]);
    let j = spec("jitter(b=0.4,c=0.4,s=0.4,h=10,seed=7)");
    assert_eq!(
        j.ops,
        vec![AugOp::ColorJitter(JitterSpec {
            seed: Some(7),
            ..JitterSpec::fixed(0.4, 0.4, 0.4, 10.0)
        })]
    );
    let err = parse_spec("hflp").unwrap_err();
    assert!(matches!(err, Error::SpecParse(_)));
    assert!(err.to_string().contains("hflp"));
    for bad in ["", "hflip+", "jitter(b=)", "jitter(q=1)", "jitter(b=-1)", "HFLIP"] {
        assert!(parse_spec(bad).is_err(), "{bad:?} should not parse");
    }
}

#[test]
fn render_parse_round_trip() {
    for text in ["none", "hflip", "hflip+vflip+jitter", "equalize+invert", "jitter(b=1.2,c=0.8:1.1,h=5,seed=3)"] {
        let s = spec(text);
        assert_eq!(parse_spec(&s.render()).unwrap(), s, "{text}");
    }
}

#[test]
fn ranged_jitter_is_seeded() {
    let mut r = rng(25);
    let im = random_image(&mut r, 16);
    let a = apply(&spec("jitter(b=0.6:1.4,h=-10:10,seed=5)"), &im).unwrap();
    assert_eq!(a, apply(&spec("jitter(b=0.6:1.4,h=-10:10,seed=5)"), &im).unwrap());
}

#[test]
fn png_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(26);
    for i in 0..10 {
        let im = random_image(&mut r, 32);
        let path = dir.path().join(format!("{i}.png"));
        im.save_png(&path).unwrap();
        assert_eq!(ImageBuffer::load(&path).unwrap(), im);
    }
    let junk = dir.path().join("junk.png");
    std::fs::write(&junk, b"not a png").unwrap();
    assert!(ImageBuffer::load(&junk).is_err());
}

proptest! {
    #[test]
    fn involutions(im in arb_image()) {
        prop_assert_eq!(hflip(&hflip(&im)), im.clone());
        prop_assert_eq!(vflip(&vflip(&im)), im.clone());
        prop_assert_eq!(invert(&invert(&im)), im);
    }

    #[test]
    fn flips_commute(im in arb_image()) {
        prop_assert_eq!(hflip(&vflip(&im)), vflip(&hflip(&im)));
        prop_assert_eq!(
            apply(&spec("hflip+vflip"), &im).unwrap(),
            apply(&spec("vflip+hflip"), &im).unwrap()
        );
    }

    #[test]
    fn equalize_is_idempotent(im in arb_image()) {
        let once = equalize(&im);
        prop_assert_eq!(equalize(&once), once);
    }

    #[test]
    fn jitter_keeps_shape(im in arb_image(), b in 0.0f64..3.0, c in 0.0f64..3.0, s in 0.0f64..3.0, h in -180f64..180.0) {
        let f = JitterFactors { brightness: b, contrast: c, saturation: s, hue_degrees: h };
        let out = color_jitter(&im, &f).unwrap();
        prop_assert_eq!((out.width(), out.height()), (im.width(), im.height()));
    }
}
