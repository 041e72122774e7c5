use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use prosody_gs::audio::write_wav;
use prosody_gs::features::read_gs_csv;
use prosody_gs::projection::read_scatter_csv;
use prosody_gs::synth::{silence, tone};
use prosody_gs::{Contour, FrameSpec, MetricReport, PairMetrics};

const RATE: u32 = 16_000;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prosody-gs"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "`{}` failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_tone(dir: &Path, name: &str, f: f64) {
    write_wav(dir.join(name), &tone(f, 1.0, 0.5, RATE)).unwrap();
}

#[test]
fn extract_writes_contours_and_one_gs_row_per_file() {
    let dir = tempfile::tempdir().unwrap();
    write_tone(dir.path(), "a.wav", 220.0);
    run_ok(dir.path(), &["extract", "a.wav", "-o", "out", "--mel"]);
    let spec = FrameSpec::default_for_rate(RATE);
    let f0 = Contour::from_csv(
        &fs::read_to_string(dir.path().join("out/a.f0.csv")).unwrap(),
        spec,
        RATE,
    )
    .unwrap();
    let rms = Contour::from_csv(
        &fs::read_to_string(dir.path().join("out/a.rms.csv")).unwrap(),
        spec,
        RATE,
    )
    .unwrap();
    assert_eq!((f0.len(), rms.len()), (77, 77));
    assert_eq!(
        fs::read_to_string(dir.path().join("out/a.mel.csv"))
            .unwrap()
            .lines()
            .count(),
        77
    );
    let gs = read_gs_csv(&fs::read_to_string(dir.path().join("out/gs.csv")).unwrap()).unwrap();
    assert_eq!(gs.len(), 1);
    assert_eq!(gs[0].source, "a");
    assert!((gs[0].features.f0_mean() - 220f64.ln()).abs() < 0.02);
}

#[test]
fn extract_glob_lists_files_in_sorted_order() {
    let dir = tempfile::tempdir().unwrap();
    for (name, f) in [("c.wav", 300.0), ("a.wav", 120.0), ("b.wav", 200.0)] {
        write_tone(dir.path(), name, f);
    }
    run_ok(dir.path(), &["extract", "*.wav", "-o", "out"]);
    let gs = read_gs_csv(&fs::read_to_string(dir.path().join("out/gs.csv")).unwrap()).unwrap();
    let sources: Vec<_> = gs.iter().map(|r| r.source.as_str()).collect();
    assert_eq!(sources, ["a", "b", "c"]);
}

#[test]
fn extract_reports_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    write_tone(dir.path(), "good.wav", 180.0);
    write_wav(dir.path().join("quiet.wav"), &silence(1.0, RATE)).unwrap();
    let out = run(
        dir.path(),
        &["extract", "good.wav", "quiet.wav", "-o", "out"],
    );
    assert_eq!(code(&out), 1);
    let gs = read_gs_csv(&fs::read_to_string(dir.path().join("out/gs.csv")).unwrap()).unwrap();
    assert_eq!(gs.len(), 1);
    let errors = fs::read_to_string(dir.path().join("out/errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 2);
    assert!(errors.lines().nth(1).unwrap().starts_with("quiet.wav,"));
}

#[test]
fn extract_exit_codes_distinguish_input_from_computation() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&run(dir.path(), &["extract", "missing.wav", "-o", "out"])),
        2
    );
    write_wav(dir.path().join("quiet.wav"), &silence(1.0, RATE)).unwrap();
    assert_eq!(
        code(&run(dir.path(), &["extract", "quiet.wav", "-o", "out"])),
        3
    );
}

#[test]
fn compare_reports_zero_for_identical_files_and_octave_for_110_vs_220() {
    let dir = tempfile::tempdir().unwrap();
    write_tone(dir.path(), "a.wav", 220.0);
    write_tone(dir.path(), "b.wav", 110.0);
    run_ok(dir.path(), &["extract", "a.wav", "b.wav", "-o", "feat"]);
    run_ok(
        dir.path(),
        &["norm", "fit", "feat/gs.csv", "-o", "stats.json"],
    );

    let same = run_ok(
        dir.path(),
        &["compare", "a.wav", "a.wav", "--stats", "stats.json"],
    );
    for line in same.lines() {
        let value: f64 = line.split_once(": ").unwrap().1.parse().unwrap();
        assert_eq!(value, 0.0, "{line}");
    }

    run_ok(
        dir.path(),
        &[
            "compare",
            "a.wav",
            "b.wav",
            "--stats",
            "stats.json",
            "-o",
            "m.json",
        ],
    );
    let m: PairMetrics =
        serde_json::from_str(&fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    // Every frame differs by ln 2; the diagonal path has n steps over 2n.
    assert!(
        (m.pitch_dtw - std::f64::consts::LN_2 / 2.0).abs() < 0.01,
        "{}",
        m.pitch_dtw
    );
    assert!(m.rms_dtw.abs() < 1e-9);
}

#[test]
fn compare_without_voicing_is_a_computation_error() {
    let dir = tempfile::tempdir().unwrap();
    write_tone(dir.path(), "a.wav", 220.0);
    write_tone(dir.path(), "b.wav", 150.0);
    write_wav(dir.path().join("quiet.wav"), &silence(1.0, RATE)).unwrap();
    run_ok(dir.path(), &["extract", "a.wav", "b.wav", "-o", "feat"]);
    let out = run(
        dir.path(),
        &[
            "compare",
            "a.wav",
            "quiet.wav",
            "--fit-corpus",
            "feat/gs.csv",
        ],
    );
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("quiet.wav"));
}

fn identity_manifest(dir: &Path, refs: &[(&str, f64)], texts: &[&str]) {
    for (id, f) in refs {
        write_tone(dir, &format!("{id}.wav"), *f);
    }
    let references: serde_json::Map<String, serde_json::Value> = refs
        .iter()
        .map(|(id, _)| (id.to_string(), format!("{id}.wav").into()))
        .collect();
    let manifest = serde_json::json!({
        "texts": texts,
        "references": references,
        "candidate_template": "{ref}.wav",
    });
    fs::write(dir.join("manifest.json"), manifest.to_string()).unwrap();
}

#[test]
fn mc_eval_of_identical_pairs_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    identity_manifest(
        dir.path(),
        &[("r1", 130.0), ("r2", 210.0), ("r3", 280.0)],
        &["t1", "t2"],
    );
    run_ok(dir.path(), &["extract", "*.wav", "-o", "feat"]);
    let table = run_ok(
        dir.path(),
        &[
            "mc-eval",
            "manifest.json",
            "--fit-corpus",
            "feat/gs.csv",
            "-o",
            "r.json",
            "--n-runs",
            "5",
        ],
    );
    assert!(table.contains("0.0000 ± 0.0000"));
    let report =
        MetricReport::from_json(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!((report.n_runs, report.per_pair.len()), (5, 10));
    for ms in report.aggregate.as_array() {
        assert_eq!((ms.mean, ms.std), (0.0, 0.0));
    }
}

#[test]
fn mc_eval_fails_when_too_many_pairs_are_missing() {
    let dir = tempfile::tempdir().unwrap();
    identity_manifest(dir.path(), &[("r1", 130.0), ("r2", 210.0)], &["t1"]);
    run_ok(dir.path(), &["extract", "*.wav", "-o", "feat"]);
    let manifest = serde_json::json!({
        "texts": ["t1"],
        "references": { "r1": "r1.wav", "r2": "r2.wav" },
        "candidates": { "t1:r1": "r1.wav" },
    });
    fs::write(dir.path().join("holes.json"), manifest.to_string()).unwrap();
    let out = run(
        dir.path(),
        &[
            "mc-eval",
            "holes.json",
            "--fit-corpus",
            "feat/gs.csv",
            "-o",
            "r.json",
        ],
    );
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_manifests_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_tone(dir.path(), "r1.wav", 200.0);
    run_ok(dir.path(), &["extract", "r1.wav", "-o", "feat"]);
    for text in [
        "{ not json",
        r#"{"texts": [], "references": {"r1": "r1.wav"}}"#,
        r#"{"texts": ["a:b"], "references": {"r1": "r1.wav"}}"#,
        r#"{"texts": ["t"], "references": {"r1": "r1.wav"}, "bogus": 1}"#,
    ] {
        fs::write(dir.path().join("bad.json"), text).unwrap();
        let out = run(
            dir.path(),
            &[
                "mc-eval",
                "bad.json",
                "--fit-corpus",
                "feat/gs.csv",
                "-o",
                "r.json",
            ],
        );
        assert_eq!(code(&out), 2, "{text}");
    }
}

#[test]
fn scatter_writes_one_point_per_utterance_and_warns_on_low_rank() {
    let dir = tempfile::tempdir().unwrap();
    for (name, f) in [("a.wav", 120.0), ("b.wav", 200.0), ("c.wav", 310.0)] {
        write_tone(dir.path(), name, f);
    }
    run_ok(dir.path(), &["extract", "*.wav", "-o", "feat"]);
    let out = run(dir.path(), &["scatter", "feat/gs.csv", "-o", "s.csv"]);
    assert!(out.status.success());
    let points = read_scatter_csv(&fs::read_to_string(dir.path().join("s.csv")).unwrap()).unwrap();
    assert_eq!(
        points.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(),
        ["a", "b", "c"]
    );

    // A duplicated utterance leaves three rows spanning one direction.
    fs::copy(dir.path().join("a.wav"), dir.path().join("d.wav")).unwrap();
    run_ok(
        dir.path(),
        &["extract", "a.wav", "b.wav", "d.wav", "-o", "two"],
    );
    let out = run(dir.path(), &["scatter", "two/gs.csv", "-o", "s2.csv"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert_eq!(
        read_scatter_csv(&fs::read_to_string(dir.path().join("s2.csv")).unwrap())
            .unwrap()
            .len(),
        3
    );
}

#[test]
fn toy_commands_run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["toy", "train", "--steps", "0", "-o", "toy"]);
    assert_eq!(
        fs::read_to_string(dir.path().join("toy/loss.csv"))
            .unwrap()
            .lines()
            .count(),
        1
    );
    assert!(dir.path().join("toy/checkpoint.json").is_file());

    let report = run_ok(
        dir.path(),
        &["toy", "gradcheck", "--width", "6", "--examples", "2"],
    );
    assert!(report.contains("max relative error"));
    let strict = run(
        dir.path(),
        &[
            "toy",
            "gradcheck",
            "--width",
            "6",
            "--examples",
            "2",
            "--tolerance",
            "0",
        ],
    );
    assert_eq!(code(&strict), 3);

    let small = [
        "toy",
        "ablate",
        "--steps",
        "20",
        "--width",
        "8",
        "--n-texts",
        "6",
        "--variants",
        "3",
    ];
    let ratio = run_ok(dir.path(), &[&small[..], &["--max-ratio", "100"]].concat());
    assert!(ratio.contains("ratio"));
    assert_eq!(
        code(&run(
            dir.path(),
            &[&small[..], &["--max-ratio", "0"]].concat()
        )),
        3
    );
}

#[test]
fn invalid_flags_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_tone(dir.path(), "a.wav", 220.0);
    for args in [
        &["--window-ms", "0", "extract", "a.wav", "-o", "out"][..],
        &["--hop-ms", "80", "extract", "a.wav", "-o", "out"],
        &[
            "--f0-min", "300", "--f0-max", "100", "extract", "a.wav", "-o", "out",
        ],
        &["compare", "a.wav", "a.wav"],
        &["frobnicate"],
    ] {
        assert_eq!(code(&run(dir.path(), args)), 2, "{args:?}");
    }
}
