//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use ravenbench::errstats::{chi2_contingency, fdr_by, mann_whitney_u, ztest_two_proportions};
use ravenbench::matrixgen::{generate_battery, render_case, DifficultyProfile, RenderConfig};
use ravenbench::psychfit::{fit, psi, threshold_at, threshold_interval, GridConfig, PsychParams, PsychWarning, TrialBlock};
use ravenbench::raster::Mask;
use ravenbench::register::{ransac_homography, Homography, Point, RansacConfig};
use ravenbench::simpanel::{ergas, hausdorff_sets, mse, nmi, vote, wasserstein, PanelConfig, DEFAULT_NMI_BINS};
use ravenbench_cli::commands::compare;
use ravenbench_cli::evaluate::{evaluate, Overrides, RunReport};

const RUNTIME_LIMIT: Duration = Duration::from_secs(300);

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond { Ok(detail) } else { Err(detail) }
}

struct Run {
    dir: PathBuf,
    report: RunReport,
    elapsed: Duration,
}

fn run_substrate(root: &Path, kind: &str, reps: usize, workers: Option<usize>, tag: &str) -> Run {
    let cfg = root.join(format!("{kind}_{tag}.toml"));
    std::fs::write(&cfg, format!("seed = 0\nitems = 12\nreps = {reps}\n\n[substrate]\nkind = \"{kind}\"\n")).unwrap();
    let overrides = Overrides { out_dir: Some(root.join(format!("{kind}_{tag}"))), workers };
    let start = Instant::now();
    let (dir, report) = evaluate(&cfg, &overrides).unwrap_or_else(|f| panic!("{kind}: {f}"));
    Run { dir, report, elapsed: start.elapsed() }
}

fn solved_by_stratum(r: &RunReport) -> [usize; 3] {
    let mut s = [0; 3];
    for item in r.items.iter().filter(|i| i.solved) {
        s[((item.rank as usize).clamp(1, 12) - 1) / 4] += 1;
    }
    s
}

fn ablation(lattice: &Run, local: &Run) -> Outcome {
    let (a, b) = (solved_by_stratum(&lattice.report), solved_by_stratum(&local.report));
    let detail = format!(
        "lattice {} ({a:?}, {:.1}s), local {} ({b:?}, {:.1}s)",
        lattice.report.score_line(),
        lattice.elapsed.as_secs_f64(),
        local.report.score_line(),
        local.elapsed.as_secs_f64()
    );
    check(
        lattice.report.score >= 8
            && local.report.score <= 3
            && a.iter().zip(&b).all(|(x, y)| x >= y)
            && lattice.elapsed < RUNTIME_LIMIT
            && local.elapsed < RUNTIME_LIMIT,
        detail,
    )
}

fn separation(lattice: &Run, local: &Run) -> Outcome {
    let c = compare(&lattice.dir, &local.dir, None, None).map_err(|f| f.to_string())?;
    check(
        c.thresholds_disjoint && c.a_right_of_b,
        format!("lattice {:?}, local {:?}", c.a.threshold, c.b.threshold),
    )
}

fn oracle_ceiling(oracle: &Run) -> Outcome {
    let grid = GridConfig::default();
    let boundary = grid.m_range.1 - grid.boundary_fraction * (grid.m_range.1 - grid.m_range.0);
    let r = &oracle.report;
    let at_boundary = r.threshold.is_some_and(|t| t.point >= boundary);
    check(
        r.score == 12 && at_boundary && r.warnings.contains(&PsychWarning::BoundaryWarning),
        format!("{} threshold {:?} warnings {:?}", r.score_line(), r.threshold, r.warnings),
    )
}

fn mask_points(m: &Mask) -> Vec<(i64, i64)> {
    let (w, h) = m.dimensions();
    (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| m.get(x, y))
        .map(|(x, y)| (x as i64, y as i64))
        .collect()
}

fn brute_hausdorff(a: &Mask, b: &Mask) -> f64 {
    let (pa, pb) = (mask_points(a), mask_points(b));
    let (w, h) = a.dimensions();
    if pa.is_empty() || pb.is_empty() {
        return if pa.len() == pb.len() { 0.0 } else { (w as f64).hypot(h as f64) };
    }
    let directed = |from: &[(i64, i64)], to: &[(i64, i64)]| {
        from.iter()
            .map(|p| to.iter().map(|q| (p.0 - q.0).pow(2) + (p.1 - q.1).pow(2)).min().unwrap())
            .max()
            .unwrap()
    };
    (directed(&pa, &pb).max(directed(&pb, &pa)) as f64).sqrt()
}

fn random_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> GrayImage {
    let lo: u8 = rng.random_range(0..128);
    let hi: u8 = rng.random_range(lo..=255);
    GrayImage::from_fn(w, h, |_, _| Luma([rng.random_range(lo..=hi)]))
}

fn rel_close(got: f64, want: f64) -> bool {
    got == want || (got - want).abs() <= 1e-6 * want.abs()
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut hd_ok = 0;
    for _ in 0..100 {
        let (w, h) = (rng.random_range(1..60), rng.random_range(1..60));
        let mut masks = [Mask::empty(w, h), Mask::empty(w, h)];
        for m in masks.iter_mut() {
            for _ in 0..rng.random_range(0..=200) {
                m.set(rng.random_range(0..w), rng.random_range(0..h), true);
            }
        }
        hd_ok += usize::from(hausdorff_sets(&masks[0], &masks[1]) == brute_hausdorff(&masks[0], &masks[1]));
    }

    let mut scalar_ok = 0;
    for _ in 0..200 {
        let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
        let (a, b) = (random_image(&mut rng, w, h), random_image(&mut rng, w, h));
        let xa: Vec<f64> = a.as_raw().iter().map(|&v| v as f64).collect();
        let xb: Vec<f64> = b.as_raw().iter().map(|&v| v as f64).collect();
        let n = xa.len() as f64;
        let want_mse = xa.iter().zip(&xb).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / n;
        let mean_a = xa.iter().sum::<f64>() / n;
        let want_ergas = 100.0 * 2.0 * want_mse.sqrt() / mean_a;
        let (mut sa, mut sb) = (xa.clone(), xb.clone());
        sa.sort_by(f64::total_cmp);
        sb.sort_by(f64::total_cmp);
        let want_wd = sa.iter().zip(&sb).map(|(p, q)| (p - q).abs()).sum::<f64>() / n;
        let ok = rel_close(mse(&a, &b).unwrap(), want_mse)
            && (mean_a == 0.0 || rel_close(ergas(&a, &b, 2.0).unwrap(), want_ergas))
            && rel_close(wasserstein(&a, &b), want_wd);
        scalar_ok += usize::from(ok);
    }

    let mut nmi_ok = 0;
    for i in 0..1000 {
        let (w, h) = (rng.random_range(1..24), rng.random_range(1..24));
        let a = random_image(&mut rng, w, h);
        let b = if i % 4 == 0 { a.clone() } else { random_image(&mut rng, w, h) };
        let v = nmi(&a, &b, DEFAULT_NMI_BINS).unwrap();
        nmi_ok += usize::from((1.0 - 1e-9..=2.0 + 1e-9).contains(&v));
    }
    check(
        hd_ok == 100 && scalar_ok == 200 && nmi_ok == 1000,
        format!("hausdorff {hd_ok}/100, mse/ergas/wd {scalar_ok}/200, nmi {nmi_ok}/1000"),
    )
}

fn self_identification() -> Outcome {
    let items = generate_battery(0, 12, &DifficultyProfile::default_for(12)).map_err(|e| e.to_string())?;
    let mut hits = 0;
    let mut total = 0;
    for item in &items {
        let case = render_case(item, &RenderConfig::default());
        for (k, opt) in case.option_cells.iter().enumerate() {
            total += 1;
            hits += usize::from(vote(opt, &case.option_cells, &PanelConfig::default()).unwrap().choice == k);
        }
    }
    check(hits == 96 && total == 96, format!("{hits}/{total}"))
}

fn homography_fixture(seed: u64) -> (Homography, Vec<Point>, Vec<Point>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = rng.random_range(0.9..1.1);
    let (s, c) = rng.random_range(-0.17f64..0.17).sin_cos();
    let truth = Homography(nalgebra::Matrix3::new(
        scale * c,
        -scale * s,
        rng.random_range(-20.0..20.0),
        scale * s,
        scale * c,
        rng.random_range(-20.0..20.0),
        rng.random_range(-1e-4..1e-4),
        rng.random_range(-1e-4..1e-4),
        1.0,
    ));
    let (mut src, mut dst) = (Vec::new(), Vec::new());
    for i in 0..100 {
        let p = (rng.random_range(0.0..512.0), rng.random_range(0.0..512.0));
        let q = if i % 10 < 7 {
            let t = truth.apply(p);
            (t.0 + rng.random_range(-0.3..0.3), t.1 + rng.random_range(-0.3..0.3))
        } else {
            (rng.random_range(0.0..512.0), rng.random_range(0.0..512.0))
        };
        src.push(p);
        dst.push(q);
    }
    (truth, src, dst)
}

fn homography() -> Outcome {
    let corners = [(0.0, 0.0), (512.0, 0.0), (512.0, 512.0), (0.0, 512.0)];
    let cfg = RansacConfig::default();
    let good = (1000..1200)
        .filter(|&seed| {
            let (truth, src, dst) = homography_fixture(seed);
            ransac_homography(&src, &dst, &cfg).is_ok_and(|fit| {
                corners.iter().all(|&c| {
                    let (p, q) = (fit.homography.apply(c), truth.apply(c));
                    (p.0 - q.0).hypot(p.1 - q.1) < 0.5
                })
            })
        })
        .count();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let src: Vec<Point> = (0..40).map(|_| (rng.random_range(0.0..512.0), rng.random_range(0.0..512.0))).collect();
    let exact = |dst: &[Point], want: Homography| {
        ransac_homography(&src, dst, &cfg).is_ok_and(|f| (f.homography.normalized().0 - want.0).abs().max() < 1e-6)
    };
    let identity = exact(&src, Homography::identity());
    let shifted: Vec<Point> = src.iter().map(|p| (p.0 - 9.5, p.1 + 3.75)).collect();
    let translation = exact(&shifted, Homography::translation(-9.5, 3.75));
    check(
        good >= 190 && identity && translation,
        format!("{good}/200 within 0.5 px, identity exact {identity}, translation exact {translation}"),
    )
}

fn psychometric() -> Outcome {
    let truth = PsychParams { m: 4.5, s: 1.2, lambda: 0.02 };
    let target = threshold_at(&truth, 0.5).unwrap();
    let grid = GridConfig::default();
    let covered = (500..600u64)
        .filter(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let trials: Vec<TrialBlock> = (1..=12)
                .map(|r| {
                    let x = r as f64;
                    let k = Binomial::new(20, psi(x, &truth)).unwrap().sample(&mut rng) as u32;
                    TrialBlock::new(x, k, 20).unwrap()
                })
                .collect();
            let iv = threshold_interval(&fit(&trials, &grid).unwrap(), 0.5, 0.95).unwrap();
            iv.lo <= target && target <= iv.hi
        })
        .count();
    let no_lapse = PsychParams { lambda: 0.0, ..truth };
    let at_m = psi(no_lapse.m, &no_lapse);
    let x = threshold_at(&no_lapse, 0.5).unwrap();
    let want_x = no_lapse.m + no_lapse.s * (4.0f64 / 3.0).ln();
    check(
        covered >= 90 && (at_m - 0.5625).abs() < 1e-12 && (x - want_x).abs() < 1e-9,
        format!("coverage {covered}/100, psi(m) {at_m}, x {x} vs {want_x}"),
    )
}

fn statistics() -> Outcome {
    let none = fdr_by(&[0.01, 0.02, 0.5], 0.05).rejected.iter().filter(|&&r| r).count();
    let one = fdr_by(&[0.001, 0.02, 0.5], 0.05).rejected.iter().filter(|&&r| r).count();
    let u = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).map_err(|e| e.to_string())?;
    let flat = chi2_contingency(&[vec![10, 10], vec![10, 10]]).map_err(|e| e.to_string())?;
    let skew = chi2_contingency(&[vec![20, 10], vec![10, 20]]).map_err(|e| e.to_string())?;
    let (_, zp) = ztest_two_proportions(40, 100, 60, 100);
    check(
        none == 0
            && one == 1
            && u.u == 0.0
            && (u.p - 1.0 / 3.0).abs() < 1e-12
            && (flat.p - 1.0).abs() < 1e-12
            && (skew.chi2 - 20.0 / 3.0).abs() < 1e-12
            && (zp - 0.0047).abs() <= 2e-4,
        format!(
            "BY {none}/{one}, U {} p {:.6}, chi2 flat p {} skew {:.6}, z p {zp:.5}",
            u.u, u.p, flat.p, skew.chi2
        ),
    )
}

fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "json")))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn determinism(root: &Path) -> Outcome {
    let runs: Vec<(String, BTreeMap<String, Vec<u8>>)> = [(1, "a"), (1, "b"), (8, "a"), (8, "b")]
        .iter()
        .map(|&(w, t)| {
            let run = run_substrate(root, "lattice", 10, Some(w), &format!("w{w}{t}"));
            (format!("w{w}{t}"), outputs(&run.dir))
        })
        .collect();
    let first = &runs[0].1;
    let differing: Vec<String> = runs[1..]
        .iter()
        .filter(|(_, files)| files != first)
        .map(|(tag, _)| tag.clone())
        .collect();
    check(
        differing.is_empty() && first.len() >= 6,
        format!("{} csv/json files compared across 4 runs, differing: {differing:?}", first.len()),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut attempt = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} {name}: {detail}");
        results.push((name, outcome));
    };

    let lattice = catch_unwind(|| run_substrate(root, "lattice", 50, None, "default"));
    let local = catch_unwind(|| run_substrate(root, "local", 50, None, "default"));
    let oracle = catch_unwind(|| run_substrate(root, "oracle", 50, None, "default"));
    let missing = |what: &str| -> Outcome { Err(format!("{what} run failed")) };

    attempt("1 lattice/local ablation on the seed-0 battery", &mut || match (&lattice, &local) {
        (Ok(a), Ok(b)) => ablation(a, b),
        _ => missing("lattice or local"),
    });
    attempt("2 threshold intervals separate lattice from local", &mut || match (&lattice, &local) {
        (Ok(a), Ok(b)) => separation(a, b),
        _ => missing("lattice or local"),
    });
    attempt("3 oracle ceiling with boundary warning", &mut || match &oracle {
        Ok(o) => oracle_ceiling(o),
        Err(_) => missing("oracle"),
    });
    attempt("4 similarity metrics match independent oracles", &mut metric_oracles);
    attempt("5 every option votes for itself", &mut self_identification);
    attempt("6 RANSAC homography recovery", &mut homography);
    attempt("7 psychometric calibration and analytic points", &mut psychometric);
    attempt("8 statistics reference fixtures", &mut statistics);
    attempt("9 byte-identical outputs at 1 and 8 workers", &mut || determinism(root));

    let failed = results.iter().filter(|(_, o)| o.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
