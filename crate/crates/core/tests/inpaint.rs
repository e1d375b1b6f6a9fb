use std::path::Path;
use std::time::Duration;

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ravenbench::inpaint::*;
use ravenbench::matrixgen::{generate_battery, render_case, DifficultyProfile, RenderConfig};
use ravenbench::raster::{max_unmasked_delta, save_gray, Mask, Rect};
use ravenbench::{ExternalError, InpaintError};

/// Direct pair-sum autocorrelation over unmasked pixel pairs.
fn brute_autocorrelation(img: &GrayImage, mask: &Mask, dx: usize, dy: usize) -> Option<f64> {
    let (w, h) = img.dimensions();
    let valid = |x: u32, y: u32| !mask.get(x, y);
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..h {
        for x in 0..w {
            if valid(x, y) {
                sum += img.get_pixel(x, y)[0] as f64;
                n += 1;
            }
        }
    }
    let mean = sum / n as f64;
    let (mut acc, mut pairs) = (0.0, 0usize);
    for y in 0..h.saturating_sub(dy as u32) {
        for x in 0..w.saturating_sub(dx as u32) {
            let (x2, y2) = (x + dx as u32, y + dy as u32);
            if valid(x, y) && valid(x2, y2) {
                acc += (img.get_pixel(x, y)[0] as f64 - mean) * (img.get_pixel(x2, y2)[0] as f64 - mean);
                pairs += 1;
            }
        }
    }
    (pairs > 0).then(|| acc / pairs as f64)
}

fn periodic(w: u32, h: u32, px: u32, py: u32, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tile: Vec<u8> = (0..px * py).map(|_| rng.random()).collect();
    GrayImage::from_fn(w, h, |x, y| Luma([tile[((y % py) * px + x % px) as usize]]))
}

#[test]
fn autocorrelation_matches_pair_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let img = GrayImage::from_fn(37, 30, |_, _| Luma([rng.random()]));
    let mask = Mask::from_rect(37, 30, Rect::new(20, 12, 9, 7));
    let (nx, ny, ratio) = masked_autocorrelation(&img, &mask).unwrap();
    assert_eq!((nx, ny), (19, 16));
    let zero = brute_autocorrelation(&img, &mask, 0, 0).unwrap();
    for dy in 0..ny {
        for dx in 0..nx {
            let expect = brute_autocorrelation(&img, &mask, dx, dy).unwrap() / zero;
            let got = ratio[dy * nx + dx];
            assert!((got - expect).abs() < 1e-9, "({dx},{dy}) {got} vs {expect}");
        }
    }
}

#[test]
fn periodic_texture_is_reconstructed_exactly() {
    let full = periodic(120, 110, 23, 19, 1);
    let mask = Mask::from_rect(120, 110, Rect::new(60, 50, 23, 19));
    let mut input = full.clone();
    for y in 50..69 {
        for x in 60..83 {
            input.put_pixel(x, y, Luma([255]));
        }
    }
    let est = detect_lattice(&input, &mask).unwrap();
    assert_eq!((est.pitch_x, est.pitch_y), (23.0, 19.0));
    let req = InpaintRequest::new(input, mask).unwrap();
    let out = inpaint_lattice(&req, &LatticeConfig::default());
    assert_eq!(out.substrate_id, "lattice");
    assert_eq!(out.image, full);
}

#[test]
fn battery_pitch_is_detected() {
    let items = generate_battery(0, 12, &DifficultyProfile::default_for(12)).unwrap();
    for item in items.iter().step_by(3) {
        let case = render_case(item, &RenderConfig::default());
        let est = detect_lattice(&case.image, &case.mask).unwrap();
        let pitch = case.geometry.pitch as f64;
        assert!((est.pitch_x - pitch).abs() <= 2.0 && (est.pitch_y - pitch).abs() <= 2.0, "{est:?}");
    }
}

#[test]
fn constant_image_falls_back_to_local() {
    let img = GrayImage::from_pixel(64, 64, Luma([90]));
    let mask = Mask::from_rect(64, 64, Rect::new(20, 20, 10, 10));
    assert!(matches!(detect_lattice(&img, &mask), Err(InpaintError::ConstantImage)));
    let req = InpaintRequest::new(img.clone(), mask).unwrap();
    let out = inpaint_lattice(&req, &LatticeConfig::default());
    assert_eq!(out.substrate_id, "lattice+localfallback");
    assert_eq!(out.image, img);
}

#[test]
fn oversized_mask_is_rejected() {
    let img = periodic(60, 60, 17, 17, 2);
    let mask = Mask::from_rect(60, 60, Rect::new(5, 5, 40, 40));
    assert!(matches!(detect_lattice(&img, &mask), Err(InpaintError::InsufficientCoverage)));
}

#[test]
fn substrates_keep_unmasked_pixels() {
    let item = &generate_battery(4, 12, &DifficultyProfile::default_for(12)).unwrap()[6];
    let case = render_case(item, &RenderConfig::default());
    let req = InpaintRequest::new(case.image.clone(), case.mask.clone()).unwrap();
    for out in [
        inpaint_lattice(&req, &LatticeConfig::default()),
        inpaint_local(&req, &LocalConfig::default()),
    ] {
        assert_eq!(max_unmasked_delta(&case.image, &out.image, &case.mask), 0, "{}", out.substrate_id);
    }
}

fn script(dir: &Path, body: &str) -> Vec<String> {
    let path = dir.join("stub.sh");
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    vec!["sh".to_string(), path.to_string_lossy().into_owned()]
}

fn case_dir(root: &Path, n: usize) -> std::path::PathBuf {
    let dir = root.join("case");
    let img = periodic(48, 48, 16, 16, 9);
    let mask = Mask::from_rect(48, 48, Rect::new(30, 30, 12, 12));
    let stems: Vec<String> = (1..=n).map(|i| format!("item_{i:03}")).collect();
    let items: Vec<(String, &GrayImage, &Mask)> = stems.iter().map(|s| (s.clone(), &img, &mask)).collect();
    write_case_dir(&dir, &items).unwrap();
    dir
}

const COPY_INPUTS: &str = r#"for f in "$1"/*_image.png; do cp "$f" "${f%_image.png}_result.png"; done"#;

#[test]
fn identity_stub_passes_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = case_dir(tmp.path(), 12);
    let res = run_external(&dir, &script(tmp.path(), COPY_INPUTS), Duration::from_secs(20)).unwrap();
    assert_eq!(res.items.len(), 12);
    assert_eq!(res.items[0].0, "item_001");
    assert_eq!(res.items[11].0, "item_012");
    assert!(res.get("item_007").unwrap().converged);
}

#[test]
fn silent_stub_is_missing_results() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = case_dir(tmp.path(), 3);
    let err = run_external(&dir, &script(tmp.path(), "exit 0"), Duration::from_secs(20)).unwrap_err();
    assert!(matches!(err, ExternalError::MissingResult(ref s) if s == "item_001"), "{err}");
}

#[test]
fn nonzero_exit_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = case_dir(tmp.path(), 1);
    let err = run_external(&dir, &script(tmp.path(), "exit 3"), Duration::from_secs(20)).unwrap_err();
    assert!(matches!(err, ExternalError::CommandFailed(3)), "{err}");
}

#[test]
fn slow_stub_times_out() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = case_dir(tmp.path(), 1);
    let err = run_external(&dir, &script(tmp.path(), "sleep 10"), Duration::from_millis(300)).unwrap_err();
    assert!(matches!(err, ExternalError::Timeout(_)), "{err}");
}

#[test]
fn touching_unmasked_pixels_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = case_dir(tmp.path(), 2);
    let body = r#"for f in "$1"/*_mask.png; do cp "$f" "${f%_mask.png}_result.png"; done"#;
    let err = run_external(&dir, &script(tmp.path(), body), Duration::from_secs(20)).unwrap_err();
    assert!(matches!(err, ExternalError::UnmaskedPixelsModified { ref item, .. } if item == "item_001"), "{err}");
}

#[test]
fn wrong_result_size_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = case_dir(tmp.path(), 1);
    let small = tmp.path().join("small.png");
    save_gray(&GrayImage::new(8, 8), &small).unwrap();
    let body = format!(r#"cp "{}" "$1/item_001_result.png""#, small.display());
    let err = run_external(&dir, &script(tmp.path(), &body), Duration::from_secs(20)).unwrap_err();
    assert!(matches!(err, ExternalError::DimensionMismatch { got: (8, 8), .. }), "{err}");
}

#[test]
fn empty_case_dir_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let err = run_external(tmp.path(), &script(tmp.path(), "exit 0"), Duration::from_secs(5)).unwrap_err();
    assert!(matches!(err, ExternalError::EmptyCase));
}

#[test]
fn missing_program_cannot_spawn() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = case_dir(tmp.path(), 1);
    let cmd = vec!["/nonexistent/inpainter".to_string()];
    assert!(matches!(run_external(&dir, &cmd, Duration::from_secs(5)), Err(ExternalError::Spawn(_))));
}
