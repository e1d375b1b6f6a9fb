use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ravenbench"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn stub(dir: &Path, body: &str) -> String {
    let path = dir.join("stub.sh");
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn generate_writes_battery_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(bin().args(["generate", "--seed", "3", "--items", "12", "--out"]).arg(tmp.path().join("a")));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("a");
    for n in 1..=12 {
        assert!(dir.join(format!("item_{n:03}_image.png")).exists());
        assert!(dir.join(format!("item_{n:03}_mask.png")).exists());
        for k in 0..8 {
            assert!(dir.join(format!("item_{n:03}_opt{k}.png")).exists());
        }
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["items"].as_array().unwrap().len(), 12);
    assert_eq!(manifest["taxonomy_counts"]["correct"], 12);

    run(bin().args(["generate", "--seed", "3", "--items", "12", "--out"]).arg(tmp.path().join("b")));
    assert_eq!(
        std::fs::read(dir.join("manifest.json")).unwrap(),
        std::fs::read(tmp.path().join("b/manifest.json")).unwrap()
    );
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write_config(tmp.path(), "u.toml", "seeed = 1\n[substrate]\nkind = \"local\"\n");
    assert_eq!(code(&run(bin().arg("evaluate").arg("--config").arg(&unknown))), 2);
    let zero = write_config(tmp.path(), "z.toml", "items = 0\nout_dir = \"o\"\n[substrate]\nkind = \"local\"\n");
    assert_eq!(code(&run(bin().arg("evaluate").arg("--config").arg(&zero))), 2);
    let missing = tmp.path().join("absent.toml");
    assert_eq!(code(&run(bin().arg("evaluate").arg("--config").arg(&missing))), 2);
    let no_out = write_config(tmp.path(), "n.toml", "[substrate]\nkind = \"local\"\n");
    assert_eq!(code(&run(bin().arg("evaluate").arg("--config").arg(&no_out))), 2);
    assert_eq!(code(&run(bin().args(["generate", "--items", "0", "--out"]).arg(tmp.path()))), 2);
}

#[test]
fn external_protocol_failure_exits_4_with_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let script = stub(tmp.path(), "exit 0");
    let cfg = write_config(
        tmp.path(),
        "ext.toml",
        &format!(
            "items = 3\nreps = 1\nout_dir = \"run\"\n[substrate]\nkind = \"external\"\ncommand = [\"sh\", \"{script}\"]\ntimeout_secs = 30\n"
        ),
    );
    let out = run(bin().arg("evaluate").arg("--config").arg(&cfg));
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    let marker = std::fs::read_to_string(tmp.path().join("run/FAILED")).unwrap();
    assert!(marker.contains("item_001"), "{marker}");
    assert!(tmp.path().join("run/config.toml").exists());
    assert!(tmp.path().join("run/provenance.json").exists());
}

#[test]
fn external_identity_run_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let script = stub(tmp.path(), r#"for f in "$1"/*_image.png; do cp "$f" "${f%_image.png}_result.png"; done"#);
    let cfg = write_config(
        tmp.path(),
        "ext.toml",
        &format!(
            "items = 3\nreps = 2\nout_dir = \"run\"\n[substrate]\nkind = \"external\"\ncommand = [\"sh\", \"{script}\"]\ntimeout_secs = 30\n"
        ),
    );
    let out = run(bin().arg("evaluate").arg("--config").arg(&cfg));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let reps = std::fs::read_to_string(tmp.path().join("run/reps.csv")).unwrap();
    assert_eq!(reps.lines().count(), 1 + 6);
    assert!(reps.contains("external:sh"));
    assert!(!tmp.path().join("run/FAILED").exists());
}

const COHORT_HEADER: &str = "participant_id,group,age,education_years,premorbid_score,sex,item_1,item_2,item_3,item_4,item_5,item_6,item_7,item_8,item_9,item_10,item_11,item_12";

#[test]
fn full_workflow_on_a_small_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "lat.toml", "reps = 3\nout_dir = \"lat\"\n[substrate]\nkind = \"lattice\"\n");
    let out = run(bin().arg("evaluate").arg("--config").arg(&cfg).args(["--workers", "2"]));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("score ") && l.ends_with(" / 12")), "{stdout}");
    let dir = tmp.path().join("lat");
    for f in ["config.toml", "manifest.json", "provenance.json", "reps.csv", "results.csv", "items.csv", "trials.csv", "posterior.json", "report.json", "psychometric.svg"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    assert_eq!(std::fs::read(&cfg).unwrap(), std::fs::read(dir.join("config.toml")).unwrap());
    let results = std::fs::read_to_string(dir.join("results.csv")).unwrap();
    assert!(results.starts_with("item,rep,option,hd,mse,wd,ergas,nmi,win_hd"));
    assert_eq!(results.lines().count(), 1 + 12 * 3 * 8);

    let posterior = std::fs::read(dir.join("posterior.json")).unwrap();
    assert_eq!(code(&run(bin().arg("psych").arg("--run").arg(&dir))), 0);
    assert_eq!(posterior, std::fs::read(dir.join("posterior.json")).unwrap());

    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap();
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    let answers: Vec<u64> = manifest["items"].as_array().unwrap().iter().map(|i| i["answer_index"].as_u64().unwrap()).collect();
    let mut cohort = format!("{COHORT_HEADER}\n");
    for p in 0..30 {
        let group = if p < 20 { "control" } else { "patient" };
        let responses: Vec<String> = answers
            .iter()
            .enumerate()
            .map(|(i, &a)| if p >= 20 && i >= 8 { (a + 1) % 8 } else { a }.to_string())
            .collect();
        cohort.push_str(&format!("p{p},{group},{},{},{},{},{}\n", 40 + p, 12 + p % 5, 100 + p % 7, if p % 2 == 0 { "f" } else { "m" }, responses.join(",")));
    }
    cohort.push_str("p99,control,50,12,100,f,0,1,2,,4,5,6,7,0,1,2,3\n");
    let cohort_path = write_config(tmp.path(), "cohort.csv", &cohort);
    let out = run(bin().arg("errors").arg("--run").arg(&dir).arg("--cohort").arg(&cohort_path));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("excluded 1 participants"));
    let grid = std::fs::read_to_string(dir.join("error_grid.csv")).unwrap();
    assert!(!grid.contains(",21\n") && grid.contains(",20\n"), "incomplete row must not be counted");
    for f in ["error_grid.csv", "cell_tests.csv", "overlap.json", "error_grids.json", "error_grid_control.svg", "error_grid_patient.svg", "error_grid_model.svg"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("reference group control"));
    let overlap: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("overlap.json")).unwrap()).unwrap();
    if report["score"].as_u64().unwrap() < 12 {
        assert!(overlap["report"].is_object());
    }

    std::fs::remove_file(dir.join("psychometric.svg")).unwrap();
    assert_eq!(code(&run(bin().arg("report").arg("--run").arg(&dir))), 0);
    assert!(dir.join("psychometric.svg").exists());

    let out = run(bin().arg("compare").arg(&dir).arg(&dir));
    assert_eq!(code(&out), 0);
    let cmp: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cmp["choice_diffs"].as_array().unwrap().len(), 0);
    assert_eq!(cmp["a"]["threshold"], cmp["b"]["threshold"]);
    assert_eq!(cmp["thresholds_disjoint"], false);

    let other = write_config(tmp.path(), "other.toml", "seed = 1\nitems = 3\nreps = 1\nout_dir = \"other\"\n[substrate]\nkind = \"oracle\"\n");
    assert_eq!(code(&run(bin().arg("evaluate").arg("--config").arg(&other))), 0);
    let out = run(bin().arg("compare").arg(&dir).arg(tmp.path().join("other")));
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("different batteries"));
}

#[test]
fn tiny_run_omits_the_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.toml", "items = 2\nreps = 1\nout_dir = \"t\"\n[substrate]\nkind = \"oracle\"\n");
    let out = run(bin().arg("evaluate").arg("--config").arg(&cfg));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("t");
    assert!(!dir.join("posterior.json").exists());
    assert!(!dir.join("psychometric.svg").exists());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap();
    assert!(report["psych_notice"].is_string());
    let out = run(bin().arg("report").arg("--run").arg(&dir));
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("plot omitted"));
}
