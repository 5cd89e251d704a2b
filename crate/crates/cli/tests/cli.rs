use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn golden(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden").join(file)
}

fn xr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xr"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn xr")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn golden_run(dir: &Path, name: &str, extra: &[&str]) -> Output {
    let (manifest, script) = (golden("manifest.ldjson"), golden("script.jsonl"));
    let catalog = dir.join(format!("{name}.cat"));
    let report = dir.join(format!("{name}.json"));
    let mut args = vec![
        "run",
        "--manifest",
        p(&manifest),
        "--catalog",
        p(&catalog),
        "--mock",
        p(&script),
        "--k",
        "3",
        "--k-prime",
        "5",
        "--report-path",
        p(&report),
    ];
    args.extend_from_slice(extra);
    let args: Vec<String> = args.into_iter().map(String::from).collect();
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    xr(&args)
}

fn report(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    v
}

#[test]
fn happy_path_on_the_golden_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = golden_run(dir.path(), "a", &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(&dir.path().join("a.json"));
    assert_eq!(r["metrics"]["R@1"], 1.0);
    assert_eq!(r["evaluated"], 3);
    assert_eq!(r["metadata"]["config"]["k"], 3);
    assert!(String::from_utf8_lossy(&out.stdout).contains("R@1"));
    assert!(dir.path().join("a.cat").exists());
}

#[test]
fn identical_invocations_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&golden_run(dir.path(), "a", &["--trace", p(&dir.path().join("ta"))])), 0);
    // second run reuses nothing but the fixture
    assert_eq!(code(&golden_run(dir.path(), "b", &["--trace", p(&dir.path().join("tb"))])), 0);
    // and a third reloads the catalog written by the first
    let reload = golden_run(dir.path(), "a", &["--report-path", p(&dir.path().join("c.json"))]);
    assert_eq!(code(&reload), 0, "{}", stderr(&reload));
    let a = report(&dir.path().join("a.json"));
    assert_eq!(a, report(&dir.path().join("b.json")));
    assert_eq!(a, report(&dir.path().join("c.json")));
    for q in ["q0", "q1", "q2"] {
        let file = format!("traces/{q}.ldjson");
        let ta = std::fs::read(dir.path().join("ta").join(&file)).unwrap();
        assert_eq!(ta, std::fs::read(dir.path().join("tb").join(&file)).unwrap());
        assert_eq!(ta, std::fs::read(golden(&file)).unwrap());
    }
}

#[test]
fn k_above_k_prime_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = golden_run(dir.path(), "a", &["--k", "200", "--k-prime", "100"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("k exceeds k_prime"));
    assert!(!dir.path().join("a.json").exists());
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&xr(&["run", "--no-such-flag"])), 1);
    assert_eq!(code(&xr(&[])), 1);
    assert_eq!(code(&xr(&["frobnicate"])), 1);
    let dir = tempfile::tempdir().unwrap();
    // no backend chosen
    let cat = dir.path().join("x.cat");
    let m = golden("manifest.ldjson");
    assert_eq!(code(&xr(&["run", "--manifest", p(&m), "--catalog", p(&cat)])), 1);
    // both backends
    assert_eq!(code(&xr(&["run", "--manifest", p(&m), "--catalog", p(&cat), "--mock", "s", "--live"])), 1);
    // missing manifest
    let out = xr(&["run", "--manifest", "/nonexistent/m.ldjson", "--catalog", p(&cat), "--mock", p(&golden("script.jsonl"))]);
    assert_eq!(code(&out), 1);
    // all four modalities off
    let out = golden_run(
        dir.path(),
        "off",
        &["--disable-text-sim", "--disable-vision-sim", "--disable-text-q", "--disable-vision-q"],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn runtime_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let m = golden("manifest.ldjson");
    let cat = dir.path().join("x.cat");
    let out = xr(&["run", "--manifest", p(&m), "--catalog", p(&cat), "--mock", p(&empty), "--k", "3", "--k-prime", "5"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("unscripted"));
}

#[test]
fn help_lists_defaults() {
    let out = xr(&["run", "--help"]);
    assert_eq!(code(&out), 0);
    let help = String::from_utf8_lossy(&out.stdout);
    for want in [
        "--lambda <LAMBDA>",
        "[default: 0.15]",
        "[default: 60]",
        "[default: 50]",
        "[default: 100]",
        "[default: 3]",
        "[default: 8]",
        "[default: 4]",
        "[default: rrf]",
        "[default: independent]",
        "[default: 0.1]",
    ] {
        assert!(help.contains(want), "missing {want}");
    }
    for verb in ["ingest", "embed", "eval", "ablate", "trace-dump"] {
        assert_eq!(code(&xr(&[verb, "--help"])), 0);
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "k = 2\nk_prime = 4\nlambda = 0.5\n").unwrap();
    let (m, s) = (golden("manifest.ldjson"), golden("script.jsonl"));
    let (cat, rep) = (dir.path().join("c.cat"), dir.path().join("r.json"));
    let base = ["run", "--manifest", p(&m), "--catalog", p(&cat), "--mock", p(&s), "--config", p(&cfg), "--report-path", p(&rep)];
    assert_eq!(code(&xr(&base)), 0);
    let c = &report(&rep)["metadata"]["config"];
    assert_eq!((c["k"].as_u64(), c["k_prime"].as_u64(), c["lambda"].as_f64()), (Some(2), Some(4), Some(0.5)));

    let mut with_flag = base.to_vec();
    with_flag.extend(["--k", "1"]);
    assert_eq!(code(&xr(&with_flag)), 0);
    let c = &report(&rep)["metadata"]["config"];
    assert_eq!((c["k"].as_u64(), c["k_prime"].as_u64()), (Some(1), Some(4)));

    std::fs::write(&cfg, "kk = 2\n").unwrap();
    assert_eq!(code(&xr(&base)), 1);
}

#[test]
fn trace_dump_reads_run_directories() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(code(&golden_run(dir.path(), "a", &["--trace", p(&run)])), 0);
    let out = xr(&["trace-dump", p(&run)]);
    assert_eq!(code(&out), 0);
    let lines: Vec<Value> = String::from_utf8_lossy(&out.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    // per query: header, 12 coarse records, 5 fine records
    assert_eq!(lines.len(), 3 * (1 + 12 + 5));
    let fine = xr(&["trace-dump", p(&run.join("traces/q0.ldjson")), "--stage", "fine"]);
    let first: Value = serde_json::from_str(String::from_utf8_lossy(&fine.stdout).lines().next().unwrap()).unwrap();
    assert_eq!(first["stage"], "fine");
    assert_eq!(first["id"], "img01");
    assert_eq!(code(&xr(&["trace-dump", "/nonexistent.ldjson"])), 1);
}

#[test]
fn ingest_converts_an_upstream_layout() {
    let raw = tempfile::tempdir().unwrap();
    let write = |rel: &str, body: &str| {
        let path = raw.path().join(rel);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, body).unwrap();
    };
    write("image_splits/split.rc2.test1.json", r#"{"r0":"./test1/r0.png","t0":"./test1/t0.png","x0":"./test1/x0.png"}"#);
    write(
        "captions/cap.rc2.test1.json",
        r#"[{"pairid":1,"reference":"r0","caption":"add a hat","img_set":{"id":1,"members":["r0","t0","x0"]}},
            {"pairid":2,"reference":"t0","caption":"remove it","img_set":{"id":2,"members":["t0","x0"]}}]"#,
    );
    let out_path = raw.path().join("cirr.manifest");
    let out = xr(&["ingest", "--dataset", "cirr", "--raw", p(raw.path()), "--out", p(&out_path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains(r#""kind":"query""#)).count(), 2);
    assert!(stderr(&out).contains("2 queries (2 without ground truth)"));

    assert_eq!(code(&xr(&["ingest", "--dataset", "nope", "--raw", ".", "--out", "x"])), 1);
    let missing = xr(&["ingest", "--dataset", "circo", "--raw", p(raw.path()), "--out", p(&out_path)]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn embed_then_run_with_the_built_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let (m, s) = (golden("manifest.ldjson"), golden("script.jsonl"));
    let cat = dir.path().join("e.cat");
    let out = xr(&["embed", "--manifest", p(&m), "--catalog", p(&cat), "--mock", p(&s)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("backend calls: 36"));
    // a catalog from another embedder is refused
    let noisy = xr(&["run", "--manifest", p(&m), "--catalog", p(&cat), "--mock", p(&s), "--mock-noise", "0.01", "--k", "3", "--k-prime", "5"]);
    assert_eq!(code(&noisy), 2);
}

fn series(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out_dir = dir.join(name);
    for seed in 0..10 {
        let seed = seed.to_string();
        let report = out_dir.join(format!("run{seed:0>2}.json"));
        let mut args = vec!["--mock-noise", "0.08", "--seed", seed.as_str(), "--report-path", p(&report)];
        args.extend_from_slice(extra);
        let out = golden_run(dir, &format!("{name}-{seed}"), &args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    out_dir
}

#[test]
fn series_statistics_and_significance() {
    let dir = tempfile::tempdir().unwrap();
    let ours = series(dir.path(), "ours", &[]);
    let base = series(dir.path(), "coarse-only", &["--disable-text-q", "--disable-vision-q", "--fusion", "sum"]);

    let out = xr(&["eval", "--series", p(&ours)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("Mean (%)") && text.contains("R@1"));

    let out = xr(&["ablate", "--series", p(&ours), "--baseline", p(&base), "--metric", "mAP@5"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    for col in ["Method", "Mean (%)", "StdDev", "t-test p", "Wilcoxon p", "coarse-only", "ours"] {
        assert!(text.contains(col), "missing {col} in\n{text}");
    }
    assert!(text.contains("ours vs coarse-only:"));

    // fewer than two runs
    let lonely = dir.path().join("lonely");
    std::fs::create_dir_all(&lonely).unwrap();
    std::fs::copy(ours.join("run00.json"), lonely.join("run00.json")).unwrap();
    assert_eq!(code(&xr(&["eval", "--series", p(&lonely)])), 1);
}

#[test]
fn ablation_grid_writes_fifteen_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (m, s) = (golden("manifest.ldjson"), golden("script.jsonl"));
    let (cat, out_dir) = (dir.path().join("g.cat"), dir.path().join("abl"));
    let out = xr(&[
        "ablate", "--manifest", p(&m), "--catalog", p(&cat), "--mock", p(&s), "--k", "3", "--k-prime", "5", "--grid", "--out",
        p(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(std::fs::read_dir(&out_dir).unwrap().count(), 15);
    let table = String::from_utf8_lossy(&out.stdout);
    assert_eq!(table.lines().count(), 16);
    assert!(table.contains("sim=text+vision,q=text+vision,fusion=rrf"));

    let sweep_dir = dir.path().join("sweep");
    let out = xr(&[
        "ablate", "--manifest", p(&m), "--catalog", p(&cat), "--mock", p(&s), "--k", "3", "--k-prime", "5", "--sweep-lambda",
        "0,0.15,1", "--compare-fusion", "--out", p(&sweep_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(std::fs::read_dir(&sweep_dir).unwrap().count(), 6);

    let spec = dir.path().join("spec.toml");
    std::fs::write(&spec, "[[ablation]]\ndisable_text_sim = true\ndisable_vision_sim = true\ndisable_text_q = true\ndisable_vision_q = true\n").unwrap();
    let out = xr(&["ablate", "--manifest", p(&m), "--catalog", p(&cat), "--mock", p(&s), "--k", "3", "--k-prime", "5", "--spec", p(&spec)]);
    assert_eq!(code(&out), 1);
}
