use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn nct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nct")).args(args).output().expect("binary runs")
}

fn run(cmd: &str, file: &str, extra: &[&str]) -> Output {
    let path = fixture(file);
    let mut args = vec![cmd, path.to_str().unwrap()];
    args.extend_from_slice(extra);
    nct(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn failed_checks_exit_one_only_when_strict() {
    let lax = run("check", "spaces.nct", &["--block", "M3"]);
    assert_eq!(code(&lax), 0);
    assert!(String::from_utf8_lossy(&lax.stdout).contains("x = c is not recovered from the cover 1 = a ∨ b"));
    assert_eq!(code(&run("check", "spaces.nct", &["--block", "M3", "--strict"])), 1);
    assert_eq!(code(&run("check", "spaces.nct", &["--block", "CH3", "--strict"])), 0);
}

#[test]
fn rejected_preconditions_exit_one() {
    let o = run("theorem34", "dynamics.nct", &["--block", "LTF_FAILING"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("precondition_failed"));
    assert_eq!(code(&run("theorem34", "dynamics.nct", &["--block", "DYN_CONST_PSH"])), 0);
}

#[test]
fn malformed_requests_exit_two() {
    assert_eq!(code(&run("dnt", "dynamics.nct", &["--at", "t9"])), 2);
    assert_eq!(code(&run("check", "spaces.nct", &["--block", "NOPE"])), 2);
    assert_eq!(code(&run("hilbert", "spaces.nct", &[])), 2);
    assert_eq!(code(&run("check", "missing.nct", &[])), 2);
    assert_eq!(code(&run("observable", "spectral.nct", &["--format", "dot"])), 2);

    let dir = std::env::temp_dir().join(format!("nct-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.nct");
    std::fs::write(&bad, "poset A {\n  elements: 0 1\n  order: 0<1 $\n}\n").unwrap();
    let o = nct(&["check", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("3:14"));
    let dangling = dir.join("dangling.nct");
    std::fs::write(&dangling, "system S {\n  times: t0\n  spaces: MISSING\n}\n").unwrap();
    let o = nct(&["check", dangling.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("block `S` (line 1)"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn dot_export_draws_covers() {
    let o = run("export", "spaces.nct", &["--block", "CH3", "--format", "dot"]);
    assert_eq!(code(&o), 0);
    let dot = String::from_utf8(o.stdout).unwrap();
    assert!(dot.starts_with("digraph \"CH3\" {"));
    assert!(dot.contains("\"0\" -> \"a\";") && dot.contains("\"a\" -> \"1\";"));
    assert!(!dot.contains("\"0\" -> \"1\";"));
}

#[test]
fn text_export_round_trips() {
    let o = run("export", "spectral.nct", &[]);
    let text = String::from_utf8(o.stdout).unwrap();
    let original = std::fs::read_to_string(fixture("spectral.nct")).unwrap();
    assert_eq!(nct::parse_model(&text).unwrap(), nct::parse_model(&original).unwrap());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let cases: [(&str, &str, &[&str]); 5] = [
        ("check", "spaces.nct", &["--format", "json"]),
        ("moment", "dynamics.nct", &["--block", "DYN_CONST", "--format", "json"]),
        ("sheafify", "dynamics.nct", &["--block", "DYN_COLLAPSE_PSH"]),
        ("spectralfam", "spectral.nct", &["--block", "SF_B2", "--format", "json"]),
        ("hilbert", "hilbert.nct", &["--block", "PLANE3", "--format", "json"]),
    ];
    for (cmd, file, extra) in cases {
        let a = run(cmd, file, extra);
        let b = run(cmd, file, extra);
        assert_eq!(code(&a), 0, "{cmd} {file}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(a.stdout, b.stdout, "{cmd} {file}");
    }
}
