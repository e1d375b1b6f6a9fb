use image::{GrayImage, Luma};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ravenbench::matrixgen::{generate_battery, render_case, DifficultyProfile, RenderConfig};
use ravenbench::register::*;

const CANVAS: f64 = 512.0;
const CORNERS: [(f64, f64); 4] = [(0.0, 0.0), (CANVAS, 0.0), (CANVAS, CANVAS), (0.0, CANVAS)];

fn random_homography(rng: &mut ChaCha8Rng) -> Homography {
    let scale = rng.random_range(0.9..1.1);
    let angle: f64 = rng.random_range(-0.17..0.17);
    let (s, c) = angle.sin_cos();
    let m = nalgebra::Matrix3::new(
        scale * c,
        -scale * s,
        rng.random_range(-20.0..20.0),
        scale * s,
        scale * c,
        rng.random_range(-20.0..20.0),
        rng.random_range(-1e-4..1e-4),
        rng.random_range(-1e-4..1e-4),
        1.0,
    );
    Homography(m)
}

/// 100 correspondences: 70 true matches with sub-pixel noise, 30 random.
fn fixture(seed: u64) -> (Homography, Vec<Point>, Vec<Point>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = random_homography(&mut rng);
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for i in 0..100 {
        let p = (rng.random_range(0.0..CANVAS), rng.random_range(0.0..CANVAS));
        let q = if i % 10 < 7 {
            let t = truth.apply(p);
            (t.0 + rng.random_range(-0.3..0.3), t.1 + rng.random_range(-0.3..0.3))
        } else {
            (rng.random_range(0.0..CANVAS), rng.random_range(0.0..CANVAS))
        };
        src.push(p);
        dst.push(q);
    }
    (truth, src, dst)
}

fn corner_error(a: &Homography, b: &Homography) -> f64 {
    CORNERS
        .iter()
        .map(|&c| {
            let (p, q) = (a.apply(c), b.apply(c));
            (p.0 - q.0).hypot(p.1 - q.1)
        })
        .fold(0.0, f64::max)
}

#[test]
fn ransac_recovers_seeded_fixtures() {
    let cfg = RansacConfig::default();
    let good = (0..200)
        .filter(|&seed| {
            let (truth, src, dst) = fixture(seed);
            ransac_homography(&src, &dst, &cfg).is_ok_and(|fit| corner_error(&fit.homography, &truth) < 0.5)
        })
        .count();
    assert!(good >= 190, "{good}/200");
}

#[test]
fn identity_and_translation_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let src: Vec<Point> = (0..40).map(|_| (rng.random_range(0.0..CANVAS), rng.random_range(0.0..CANVAS))).collect();
    let cfg = RansacConfig::default();
    let fit = ransac_homography(&src, &src, &cfg).unwrap();
    assert!((fit.homography.normalized().0 - Homography::identity().0).abs().max() < 1e-6);
    assert_eq!(fit.inlier_count(), 40);
    let dst: Vec<Point> = src.iter().map(|p| (p.0 + 12.5, p.1 - 7.25)).collect();
    let fit = ransac_homography(&src, &dst, &cfg).unwrap();
    assert!((fit.homography.normalized().0 - Homography::translation(12.5, -7.25).0).abs().max() < 1e-6);
}

#[test]
fn collinear_points_are_degenerate() {
    let src: Vec<Point> = (0..20).map(|i| (i as f64 * 10.0, i as f64 * 5.0)).collect();
    assert!(ransac_homography(&src, &src, &RansacConfig::default()).is_err());
}

fn shifted(img: &GrayImage, dx: u32, dy: u32) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        if x >= dx && y >= dy {
            *img.get_pixel(x - dx, y - dy)
        } else {
            Luma([255])
        }
    })
}

#[test]
fn rendered_puzzle_translation_is_recovered() {
    let item = &generate_battery(0, 12, &DifficultyProfile::default_for(12)).unwrap()[4];
    let img = render_case(item, &RenderConfig::default()).completed_with(item.answer_index);
    let moved = shifted(&img, 6, 4);
    let cfg = RegisterConfig::default();
    let reg = estimate(&extract_features(&img, &cfg), &extract_features(&moved, &cfg), &cfg);
    assert_eq!(reg.mode, RegistrationMode::Homography);
    assert!(corner_error(&reg.homography, &Homography::translation(6.0, 4.0)) < 0.5, "{:?}", reg.homography);
    let (aligned, _) = register_to_candidate(&img, &moved, &cfg);
    let interior = |i: &GrayImage| ravenbench::raster::crop(i, ravenbench::raster::Rect::new(40, 40, 400, 400));
    assert_eq!(interior(&aligned), interior(&moved));
}

#[test]
fn identical_renders_snap_to_identity() {
    let item = &generate_battery(0, 12, &DifficultyProfile::default_for(12)).unwrap()[0];
    let img = render_case(item, &RenderConfig::default()).completed_with(item.answer_index);
    let cfg = RegisterConfig::default();
    let f = extract_features(&img, &cfg);
    assert!(f.keypoints.len() >= cfg.ransac.min_inliers);
    let reg = estimate(&f, &f, &cfg);
    assert_eq!(reg.mode, RegistrationMode::NearIdentity);
    assert_eq!(reg.homography, Homography::identity());
    assert_eq!(register_to_candidate(&img, &img, &cfg).0, img);
}

#[test]
fn descriptors_survive_integer_translation() {
    let item = &generate_battery(2, 12, &DifficultyProfile::default_for(12)).unwrap()[1];
    let img = render_case(item, &RenderConfig::default()).completed_with(0);
    let moved = shifted(&img, 3, 5);
    let kp = detect_corners(&img, 20, 400);
    let kq = detect_corners(&moved, 20, 400);
    let (da, db) = (describe(&img, &kp), describe(&moved, &kq));
    let matches = match_descriptors(&da, &db);
    let exact = matches
        .iter()
        .filter(|m| kq[m.index_b].x == kp[m.index_a].x + 3 && kq[m.index_b].y == kp[m.index_a].y + 5)
        .count();
    assert!(exact * 10 >= matches.len() * 7, "{exact}/{}", matches.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn four_point_solution_interpolates(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_homography(&mut rng);
        let src = [(50.0, 60.0), (400.0, 40.0), (420.0, 450.0), (70.0, 380.0)];
        let dst = src.map(|p| h.apply(p));
        let fit = homography_from_four(&src, &dst).unwrap();
        for (s, d) in src.iter().zip(&dst) {
            let p = fit.apply(*s);
            prop_assert!((p.0 - d.0).abs() < 1e-6 && (p.1 - d.1).abs() < 1e-6);
        }
        let back = fit.inverse().unwrap();
        let r = back.apply(fit.apply((123.0, 321.0)));
        prop_assert!((r.0 - 123.0).abs() < 1e-6 && (r.1 - 321.0).abs() < 1e-6);
    }
}
