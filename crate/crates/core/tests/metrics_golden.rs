//! Metric values against fixtures produced by an independent numpy/skimage
//! implementation (see `fixtures/metrics/generate.py`).

use std::path::PathBuf;

use hypertune::metrics::{mse, psnr, ssim, Image, SsimConfig};
use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/metrics")
}

fn cases() -> Vec<Value> {
    let text = std::fs::read_to_string(fixtures().join("golden.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    v["cases"].as_array().unwrap().clone()
}

fn image(case: &Value, key: &str) -> Image {
    let dim = |k: &str| case[k].as_u64().unwrap() as usize;
    let pixels = case[key]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p.as_f64().unwrap() / 255.0)
        .collect();
    Image::new(dim("width"), dim("height"), dim("channels"), pixels).unwrap()
}

#[test]
fn golden_values_match() {
    let cases = cases();
    assert!(cases.len() >= 6);
    for case in &cases {
        let name = case["name"].as_str().unwrap();
        let (a, b) = (image(case, "a"), image(case, "b"));
        let m = mse(&a, &b).unwrap();
        assert!(
            (m - case["mse"].as_f64().unwrap()).abs() <= 1e-9,
            "{name} mse {m}"
        );
        let p = psnr(&a, &b).unwrap();
        assert!(
            (p - case["psnr"].as_f64().unwrap()).abs() <= 1e-6,
            "{name} psnr {p}"
        );
        let g = ssim(&a, &b, &SsimConfig::global()).unwrap();
        assert!(
            (g - case["ssim_global"].as_f64().unwrap()).abs() <= 1e-9,
            "{name} global ssim {g}"
        );
        match case["ssim_gaussian"].as_f64() {
            Some(want) => {
                let s = ssim(&a, &b, &SsimConfig::default()).unwrap();
                assert!((s - want).abs() <= 1e-9, "{name} ssim {s} vs {want}");
            }
            None => assert!(ssim(&a, &b, &SsimConfig::default()).is_err(), "{name}"),
        }
    }
}

#[test]
fn png_fixtures_decode_to_the_raw_arrays() {
    for case in cases() {
        let name = case["name"].as_str().unwrap();
        let path = fixtures().join(format!("{name}_a.png"));
        if !path.exists() {
            continue;
        }
        assert_eq!(Image::from_png(&path).unwrap(), image(&case, "a"), "{name}");
        let b = Image::from_png(fixtures().join(format!("{name}_b.png"))).unwrap();
        assert_eq!(b, image(&case, "b"), "{name}");
    }
}
