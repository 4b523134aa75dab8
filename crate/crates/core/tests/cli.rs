use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hdseiz::dataio::{load_model, read_reports, MODEL_HEADER_LEN};

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        std::fs::write(
            ws.path("run.conf"),
            "# small and fast\ndim = 1024\nsubjects = 3\nchannels = 2\nseizure_sec = 16\nnon_seizure_sec = 24\n",
        )
        .unwrap();
        ws
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_hdseiz"))
            .current_dir(self.dir.path())
            .args(args)
            .args(["--config", "run.conf"])
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert_eq!(stdout.lines().count(), 1, "{stdout}");
        stdout
    }

    fn prepared(&self) {
        self.ok(&["synth", "--out", "cohort"]);
        self.ok(&["features", "--cohort", "cohort"]);
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn pipeline_produces_reports_for_every_subject() {
    let ws = Workspace::new();
    ws.prepared();
    ws.ok(&["train", "--cohort", "cohort", "--out", "models"]);
    let line = ws.ok(&["eval", "--cohort", "cohort", "--out", "reports"]);
    assert!(
        line.starts_with("eval: personalized over 3 subjects"),
        "{line}"
    );
    let reports = read_reports(&ws.path("reports/personalized.json")).unwrap();
    assert_eq!(reports.len(), 3);
    assert_eq!(reports[0].subject_id, "synth-s000");
    assert_eq!(reports[0].metrics.len(), 18);
    let models: Vec<_> = std::fs::read_dir(ws.path("models")).unwrap().collect();
    assert_eq!(models.len(), 3);
}

#[test]
fn model_file_size_matches_layout() {
    let ws = Workspace::new();
    ws.prepared();
    ws.ok(&["train", "--cohort", "cohort", "--out", "models"]);
    let path = ws.path("models/synth-s001.hdcm");
    let bytes = std::fs::read(&path).unwrap();
    let meta_len = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let m = load_model(&path).unwrap();
    let (levels, features) = (m.codebooks.num_levels(), m.codebooks.num_features());
    assert_eq!((levels, features), (20, 44));
    let words = 1024usize.div_ceil(64);
    assert_eq!(
        bytes.len(),
        MODEL_HEADER_LEN + meta_len + words * 8 * (2 + levels + features)
    );
    assert_eq!(&bytes[..4], b"HDCM");
}

#[test]
fn single_subject_avrg_generalization_is_identity() {
    let ws = Workspace::new();
    ws.prepared();
    ws.ok(&["train", "--cohort", "cohort", "--out", "models"]);
    std::fs::create_dir(ws.path("one")).unwrap();
    std::fs::copy(
        ws.path("models/synth-s002.hdcm"),
        ws.path("one/synth-s002.hdcm"),
    )
    .unwrap();
    ws.ok(&[
        "generalize",
        "--models",
        "one",
        "--method",
        "avrg",
        "--out",
        "g.hdcm",
    ]);
    let src = load_model(&ws.path("one/synth-s002.hdcm")).unwrap();
    let g = load_model(&ws.path("g.hdcm")).unwrap();
    assert_eq!(g.model.seizure, src.model.seizure);
    assert_eq!(g.model.non_seizure, src.model.non_seizure);
    assert_eq!(g.model.sources, vec!["synth-s002".to_string()]);
}

#[test]
fn analysis_commands_write_their_outputs() {
    let ws = Workspace::new();
    ws.prepared();
    ws.ok(&["train", "--cohort", "cohort", "--out", "models"]);
    ws.ok(&["generalize", "--models", "models", "--out", "g.hdcm"]);
    let line = ws.ok(&[
        "evolution",
        "--models",
        "models",
        "--repetitions",
        "3",
        "--out",
        "evo.csv",
    ]);
    assert!(line.contains("3 subjects x 3 orders"), "{line}");
    let evo = std::fs::read_to_string(ws.path("evo.csv")).unwrap();
    assert_eq!(evo.lines().count(), 4);
    assert!(evo.starts_with("step,simSS,simNSNS,simSNS,simNSS,separability"));

    ws.ok(&["similarity", "--models", "models", "--out", "sim"]);
    for f in ["s_to_s.csv", "ns_to_ns.csv", "s_to_ns.csv", "summary.json"] {
        assert!(ws.path("sim").join(f).exists(), "{f}");
    }

    ws.ok(&[
        "hybrid",
        "--model",
        "models/synth-s000.hdcm",
        "--source",
        "g.hdcm",
        "--out",
        "h.hdcm",
    ]);
    let h = load_model(&ws.path("h.hdcm")).unwrap();
    let g = load_model(&ws.path("g.hdcm")).unwrap();
    let p = load_model(&ws.path("models/synth-s000.hdcm")).unwrap();
    assert_eq!(
        (h.model.non_seizure, h.model.seizure),
        (g.model.non_seizure, p.model.seizure)
    );

    ws.ok(&[
        "transfer", "--source", "g.hdcm", "--target", "cohort", "--out", "tr",
    ]);
    assert_eq!(
        read_reports(&ws.path("tr/transfer_generalized.json"))
            .unwrap()
            .len(),
        3
    );
}

#[test]
fn emit_curves_and_selection_sweep() {
    let ws = Workspace::new();
    ws.prepared();
    ws.ok(&[
        "eval",
        "--cohort",
        "cohort",
        "--out",
        "rep",
        "--emit-curves",
        "--repetitions",
        "2",
    ]);
    for f in [
        "personalized.json",
        "generalized.json",
        "evolution.csv",
        "selection.csv",
    ] {
        assert!(ws.path("rep").join(f).exists(), "{f}");
    }
    ws.ok(&[
        "hybrid",
        "--gen-reports",
        "rep/generalized.json",
        "--pers-reports",
        "rep/personalized.json",
        "--threshold-steps",
        "4",
        "--out",
        "sel.csv",
    ]);
    let sel = std::fs::read_to_string(ws.path("sel.csv")).unwrap();
    // header + 3 postprocessing variants x 5 thresholds
    assert_eq!(sel.lines().count(), 16);
    assert!(sel.starts_with("post,threshold,fractionGen"));
}

#[test]
fn flags_override_config_file() {
    let ws = Workspace::new();
    ws.ok(&["synth", "--subjects", "2", "--out", "c2"]);
    let subjects = std::fs::read_dir(ws.path("c2"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().is_dir())
        .count();
    assert_eq!(subjects, 2);
}

#[test]
fn usage_errors_exit_2() {
    let ws = Workspace::new();
    let out = ws.run(&["frobnicate"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("Usage"));
    let out = ws.run(&["synth", "--no-such-flag", "1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn version_and_help() {
    let out = Command::new(env!("CARGO_BIN_EXE_hdseiz"))
        .arg("--version")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("hdseiz "));
    let out = Command::new(env!("CARGO_BIN_EXE_hdseiz"))
        .arg("--help")
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    for cmd in [
        "synth",
        "features",
        "train",
        "generalize",
        "evolution",
        "similarity",
        "hybrid",
        "eval",
        "transfer",
    ] {
        assert!(text.contains(cmd), "{cmd}");
    }
    assert!(text.contains("--window-sec"));
}

#[test]
fn validation_failures_are_config_errors() {
    let ws = Workspace::new();
    for args in [
        &["synth", "--dim", "abc", "--out", "x"][..],
        &["synth", "--subjects", "0", "--out", "x"],
        &["synth"],
        &["eval", "--cohort", "x", "--out", "y", "--method", "median"],
        &["eval", "--cohort", "x", "--out", "y", "--dim", "10"],
    ] {
        let out = ws.run(args);
        assert_eq!(code(&out), 3, "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).starts_with("CONFIG: "), "{}", stderr(&out));
    }
    std::fs::write(ws.path("bad.conf"), "dim = 10\nwhatever = 2\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hdseiz"))
        .current_dir(ws.dir.path())
        .args(["synth", "--out", "x", "--config", "bad.conf"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("bad.conf:2"), "{}", stderr(&out));
}

#[test]
fn parse_and_data_errors() {
    let ws = Workspace::new();
    ws.prepared();
    let feature_file = first_file(&ws.path("cohort/synth-s000"), ".features.csv");
    let text = std::fs::read_to_string(&feature_file).unwrap();
    let broken = text.replacen(",0\n", ",7\n", 1);
    std::fs::write(&feature_file, broken).unwrap();
    let out = ws.run(&["eval", "--cohort", "cohort", "--out", "rep"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).starts_with("PARSE: "));

    std::fs::create_dir(ws.path("models")).unwrap();
    std::fs::write(ws.path("models/junk.hdcm"), b"HDCM\x01garbage").unwrap();
    let out = ws.run(&["generalize", "--models", "models", "--out", "g.hdcm"]);
    assert_eq!(code(&out), 4);

    let out = ws.run(&["eval", "--cohort", "missing", "--out", "rep"]);
    assert_eq!(code(&out), 5);
    assert!(stderr(&out).starts_with("DATA: "));
}

fn first_file(dir: &Path, suffix: &str) -> PathBuf {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(suffix))
        .collect();
    files.sort();
    files.remove(0)
}
