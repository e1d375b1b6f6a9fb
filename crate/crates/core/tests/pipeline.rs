use std::path::Path;
use std::time::Duration;

use ravenbench::matrixgen::{generate_battery, DifficultyProfile};
use ravenbench::pipeline::*;

fn prepared(n: usize, cfg: &EvalConfig) -> Vec<PreparedItem> {
    generate_battery(cfg.seed, 12, &DifficultyProfile::default_for(12))
        .unwrap()
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(i, item)| PreparedItem::new(i, item, &cfg.register))
        .collect()
}

#[test]
fn oracle_solves_items() {
    let cfg = EvalConfig { reps: 6, ..EvalConfig::default() };
    for p in prepared(4, &cfg) {
        let (block, records) = run_repetitions(&p, &Substrate::Oracle, &cfg, Path::new("/nonexistent")).unwrap();
        assert_eq!(block.n, 6);
        assert_eq!(block.x, p.item.difficulty_rank as f64);
        assert!(item_solved(&records), "{}", p.item.id);
    }
}

#[test]
fn repetitions_are_reproducible() {
    let cfg = EvalConfig::default();
    let p = &prepared(2, &cfg)[1];
    let sub = Substrate::Lattice(Default::default());
    assert_eq!(run_repetition(p, &sub, 3, &cfg), run_repetition(p, &sub, 3, &cfg));
    let (a, _) = perturbed_input(p, 0, &cfg);
    let (b, _) = perturbed_input(p, 1, &cfg);
    assert_ne!(a.kind(), b.kind());
}

#[test]
fn modal_choice_breaks_ties_low() {
    let cfg = EvalConfig { reps: 2, ..EvalConfig::default() };
    let p = &prepared(1, &cfg)[0];
    let mut records: Vec<RepRecord> = (0..2).map(|r| run_repetition(p, &Substrate::Oracle, r, &cfg).unwrap()).collect();
    records[0].vote.choice = 5;
    records[1].vote.choice = 3;
    assert_eq!(modal_choice(&records), Some(3));
}

#[test]
fn external_identity_scores_like_its_input() {
    let tmp = tempfile::tempdir().unwrap();
    let stub = tmp.path().join("copy.sh");
    std::fs::write(&stub, "#!/bin/sh\nfor f in \"$1\"/*_image.png; do cp \"$f\" \"${f%_image.png}_result.png\"; done\n").unwrap();
    let command = vec!["sh".to_string(), stub.to_string_lossy().into_owned()];
    let cfg = EvalConfig { reps: 2, ..EvalConfig::default() };
    let items = prepared(3, &cfg);
    let external = run_external_rep(&items, &command, Duration::from_secs(30), 1, tmp.path(), &cfg).unwrap();
    assert_eq!(external.len(), 3);
    assert!(tmp.path().join("rep_001").join("item_002_mask.png").exists());
    for (p, ext) in items.iter().zip(&external) {
        assert_eq!(ext.substrate_id, "external:sh");
        let (perturbation, input) = perturbed_input(p, 1, &cfg);
        assert_eq!(ext.perturbation, perturbation);
        assert_eq!(ext.vote, score_fill(p, &input, &cfg).0, "{}", p.item.id);
    }
}
