//! The `hai` binary driven as a user would, checking outputs and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hai(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hai"))
        .args(args)
        .env_remove("HAI_THREADS")
        .output()
        .expect("spawn hai")
}

fn ok(args: &[&str]) -> String {
    let out = hai(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    hai(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        ok(&["genkey", "--out", s(&root.join("k"))]);
        ok(&[
            "gen-synth",
            "cyber",
            "--out-dir",
            s(&root),
            "--n-train",
            "120",
            "--n-val",
            "20",
            "--n-feat",
            "900",
            "--seed",
            "3",
        ]);
        Fixture { _dir: dir, root }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn protect(&self, input: &str, out: &str, extra: &[&str]) {
        let mut args = vec![
            "protect",
            "--key",
            s(&self.root.join("k")),
            "--delta",
            "3",
            "--in",
            s(&self.root.join(input)),
            "--out",
            s(&self.root.join(out)),
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        args.extend(extra.iter().map(|a| a.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ok(&refs);
    }
}

#[test]
fn genkey_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("k");
    ok(&["genkey", "--out", s(&k)]);
    let first = fs::read(&k).unwrap();
    assert_eq!(first.len(), 65);
    assert_eq!(code(&["genkey", "--out", s(&k)]), 3);
    assert_eq!(fs::read(&k).unwrap(), first);
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        assert_eq!(
            fs::metadata(&k).unwrap().permissions().mode() & 0o777,
            0o400
        );
    }
    ok(&["genkey", "--out", s(&k), "--force"]);
    assert_ne!(fs::read(&k).unwrap(), first);
}

#[test]
fn protection_is_deterministic_and_compresses() {
    let f = Fixture::new();
    f.protect("train.hai1", "a.hai1", &["--permute-classes"]);
    f.protect("train.hai1", "b.hai1", &["--permute-classes"]);
    let (a, b) = (
        fs::read(f.p("a.hai1")).unwrap(),
        fs::read(f.p("b.hai1")).unwrap(),
    );
    assert_eq!(a, b);
    let plain = fs::metadata(f.p("train.hai1")).unwrap().len() as f64;
    let ratio = plain / a.len() as f64;
    assert!((2.5..3.2).contains(&ratio), "{ratio}");
}

#[test]
fn clustering_and_classification_round_trip() {
    let f = Fixture::new();
    f.protect("train.hai1", "pt.hai1", &["--permute-classes"]);
    f.protect("val.hai1", "pv.hai1", &[]);
    ok(&[
        "cluster",
        "--in",
        s(&f.p("train.hai1")),
        "--k",
        "2",
        "--out",
        s(&f.p("plain.json")),
    ]);
    ok(&[
        "cluster",
        "--in",
        s(&f.p("pt.hai1")),
        "--k",
        "2",
        "--out",
        s(&f.p("prot.json")),
        "--plaintext",
        s(&f.p("train.hai1")),
        "--key",
        s(&f.p("k")),
    ]);
    let ri: f64 = ok(&["rand-index", s(&f.p("plain.json")), s(&f.p("prot.json"))])
        .trim()
        .parse()
        .unwrap();
    assert!(ri >= 0.98, "{ri}");
    let self_ri = ok(&["rand-index", s(&f.p("plain.json")), s(&f.p("plain.json"))]);
    assert_eq!(self_ri.trim().parse::<f64>().unwrap(), 1.0);

    ok(&[
        "classify",
        "--train",
        s(&f.p("train.hai1")),
        "--query",
        s(&f.p("val.hai1")),
        "--out",
        s(&f.p("pred.json")),
    ]);
    let out = ok(&[
        "classify",
        "--train",
        s(&f.p("pt.hai1")),
        "--query",
        s(&f.p("pv.hai1")),
        "--agree-with",
        s(&f.p("pred.json")),
    ]);
    assert!(out.contains("1.0"), "{out}");
}

#[test]
fn bench_reports_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let small = [
        "bench",
        "--synthetic",
        "--n-train",
        "80",
        "--n-val",
        "10",
        "--n-feat",
        "600",
        "--runs",
        "1",
        "--warmup",
        "0",
    ];
    let mut args = small.to_vec();
    args.extend(["--out", s(&report)]);
    ok(&args);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(json["report_version"], 1);
    assert!(json["rand_index"].as_f64().unwrap() >= 0.98);
    assert!(json["timings"]["plaintext"]["kmodes_ms"].is_number());

    // records that are nearly noise do not cluster the same way twice
    let noisy = [
        "bench",
        "--synthetic",
        "--n-train",
        "80",
        "--n-val",
        "10",
        "--n-feat",
        "90",
        "--runs",
        "1",
        "--warmup",
        "0",
        "--p-flip",
        "0.49",
        "--check",
    ];
    let out = hai(&noisy);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn usage_and_data_errors() {
    let f = Fixture::new();
    assert_eq!(code(&["no-such-command"]), 2);
    assert_eq!(code(&["bench"]), 2);
    assert_eq!(
        code(&[
            "rand-index",
            s(&f.p("missing.json")),
            s(&f.p("missing.json"))
        ]),
        3
    );
    // a bit dataset under the real scheme
    assert_eq!(
        code(&[
            "protect",
            "--key",
            s(&f.p("k")),
            "--delta",
            "3",
            "--scheme",
            "real",
            "--in",
            s(&f.p("train.hai1")),
            "--out",
            s(&f.p("x.hai1")),
        ]),
        3
    );
    assert_eq!(
        code(&[
            "protect",
            "--key",
            s(&f.p("k")),
            "--delta",
            "0.5",
            "--in",
            s(&f.p("train.hai1")),
            "--out",
            s(&f.p("x.hai1")),
        ]),
        2
    );
    fs::write(f.p("junk"), b"not a dataset").unwrap();
    assert_eq!(
        code(&[
            "cluster",
            "--in",
            s(&f.p("junk")),
            "--out",
            s(&f.p("c.json"))
        ]),
        3
    );
}

#[test]
fn images_and_attacks() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "gen-synth",
        "images",
        "--out-dir",
        s(d),
        "--n-train",
        "40",
        "--n-val",
        "5",
    ]);
    ok(&["genkey", "--out", s(&d.join("k"))]);
    ok(&[
        "ingest-idx",
        "--images",
        s(&d.join("train-images-idx3-ubyte")),
        "--labels",
        s(&d.join("train-labels-idx1-ubyte")),
        "--out",
        s(&d.join("img.hai1")),
    ]);
    ok(&[
        "protect",
        "--key",
        s(&d.join("k")),
        "--delta",
        "6",
        "--scheme",
        "real",
        "--n-out",
        "132",
        "--in",
        s(&d.join("train-images-idx3-ubyte")),
        "--labels",
        s(&d.join("train-labels-idx1-ubyte")),
        "--out",
        s(&d.join("p.hai1")),
        "--permute-classes",
    ]);
    let prot = fs::read(d.join("p.hai1")).unwrap();
    assert_eq!(&prot[..4], b"HAI1");

    let rep = d.join("pre.json");
    ok(&[
        "attack",
        "preimage",
        "--key",
        s(&d.join("k")),
        "--out",
        s(&rep),
    ]);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(&rep).unwrap()).unwrap();
    assert_eq!(json["metrics"]["fraction_matching_expected"], 1.0);

    let out = ok(&[
        "attack",
        "avalanche",
        "--in",
        s(&d.join("img.hai1")),
        "--scheme",
        "real",
        "--keys",
        "10",
    ]);
    let json: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(json["metrics"]["pooled_divergence"].as_f64().unwrap().abs() < 0.1);
}
