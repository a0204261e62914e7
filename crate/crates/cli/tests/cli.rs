//! End-to-end tests of the `sicsim` binary: subcommands, config
//! handling, CSV contract and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn sicsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sicsim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

#[test]
fn simulate_writes_header_exact_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = sicsim(
        &[
            "simulate",
            "sweep.ebno_db=[4.0]",
            "stop.max_frames=1",
            "stop.min_errors=1000",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("ber.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "ebno_db,stage,decoder,combining,frames,bits,bit_errors,ber,low_confidence"
    );
    // One row per stage, all marked low-confidence at one frame.
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for (i, row) in rows.iter().enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 9);
        assert_eq!(cols[0], "4");
        assert_eq!(cols[1], (i + 1).to_string());
        assert_eq!(cols[2], "viterbi");
        assert_eq!(cols[3], "true");
        assert_eq!(cols[4], "1");
        assert_eq!(cols[5], "470");
        assert_eq!(cols[8], "true");
    }
}

#[test]
fn decoder_override_reaches_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = sicsim(
        &[
            "simulate",
            "detector.decoder=bcjr",
            "sweep.ebno_db=[4.0]",
            "stop.max_frames=1",
            "stop.min_errors=1000",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("ber.csv")).unwrap();
    for row in csv.lines().skip(1) {
        assert_eq!(row.split(',').nth(2).unwrap(), "bcjr");
    }
}

#[test]
fn config_file_and_override_compose() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(
        &config_path,
        "[sweep]\nebno_db = [2.0]\n\n[stop]\nmax_frames = 1\nmin_errors = 1000\n\n[output]\ncsv_path = \"out.csv\"\n",
    )
    .unwrap();
    let out = sicsim(
        &[
            "simulate",
            "--config",
            config_path.to_str().unwrap(),
            "detector.stages=2",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3); // header + 2 stages
    assert!(csv.lines().nth(1).unwrap().starts_with("2,1,"));
}

#[test]
fn csv_identical_at_any_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in ["1", "4"] {
        let out = sicsim(
            &[
                "simulate",
                "sweep.ebno_db=[2.0]",
                "stop.max_frames=25",
                "stop.min_errors=40",
                "--workers",
                workers,
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
        outputs.push(std::fs::read(dir.path().join("ber.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn unknown_key_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = sicsim(&["simulate", "detector.turbo_iters=4"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("turbo_iters"), "{}", stderr(&out));
}

#[test]
fn unknown_section_in_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("bad.toml");
    std::fs::write(&config_path, "[plotting]\nenabled = true\n").unwrap();
    let out = sicsim(
        &["simulate", "--config", config_path.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("plotting"), "{}", stderr(&out));
}

#[test]
fn bad_enum_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = sicsim(&["simulate", "detector.decoder=turbo"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("decoder"), "{}", stderr(&out));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = sicsim(
        &[
            "simulate",
            "output.csv_path=/nonexistent-root-dir/x.csv",
            "sweep.ebno_db=[4.0]",
            "stop.max_frames=1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_config_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = sicsim(&["simulate", "--config", "no-such-file.toml"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn info_prints_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = sicsim(&["info", "detector.decoder=bcjr"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("decoder = \"bcjr\""), "{text}");
    assert!(text.contains("k_users = 5"), "{text}");
    assert!(text.contains("zeta = 0.25"), "{text}");
}

#[test]
fn validate_passes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = sicsim(&["validate", "--workers", "2"], dir.path());
    let b = sicsim(&["validate", "--workers", "4"], dir.path());
    assert!(a.status.success(), "{}", stdout(&a));
    assert_eq!(stdout(&a), stdout(&b));
    for line in stdout(&a).lines() {
        assert!(line.starts_with("PASS "), "{line}");
    }
}
