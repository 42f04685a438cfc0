use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn colcomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_colcomp"))
        .args(args)
        .output()
        .expect("run colcomp")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn mar_values(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split_whitespace().skip(1).map(|t| t.parse().unwrap()).collect())
        .collect()
}

#[test]
fn infer_with_large_threshold_is_exact() {
    let model = data("chain3.uai");
    let o = colcomp(&["infer", model.to_str().unwrap(), "--query-var", "1", "--size-threshold", "1000000", "--samples", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("MAR\n2 "));
    let m = mar_values(&out);
    assert!((m[0][0] - 44.0 / 156.0).abs() < 1e-12);
    assert!((m[0][1] - 112.0 / 156.0).abs() < 1e-12);
    let report = String::from_utf8(o.stderr).unwrap();
    assert!(report.contains("size_threshold=1000000\n"));
    assert!(report.contains("rejected=0 "));
}

#[test]
fn zero_samples_is_a_usage_error() {
    let model = data("chain3.uai");
    let o = colcomp(&["infer", model.to_str().unwrap(), "--samples", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
}

#[test]
fn same_seed_gives_identical_output() {
    let model = data("chain3.uai");
    let args = [
        "infer", model.to_str().unwrap(), "--size-threshold", "1", "--samples", "200", "--seed", "42", "--policy", "fd",
    ];
    let a = colcomp(&args);
    let b = colcomp(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(mar_values(&stdout(&a)).len(), 3);
    let mut workers = args.to_vec();
    workers.extend(["--workers", "3"]);
    assert_eq!(colcomp(&workers).stdout, a.stdout);
    let mut other = args.to_vec();
    other[8] = "43";
    assert_ne!(colcomp(&other).stdout, a.stdout);
}

#[test]
fn runs_against_a_reference() {
    let model = data("chain3.uai");
    let dir = std::env::temp_dir().join(format!("colcomp-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let reference = dir.join("exact.mar");
    let o = colcomp(&["exact", model.to_str().unwrap(), "--output", reference.to_str().unwrap()]);
    assert!(o.status.success());
    let report = dir.join("report.txt");
    let o = colcomp(&[
        "infer", model.to_str().unwrap(), "--query-var", "1", "--size-threshold", "1", "--samples", "100", "--runs", "3",
        "--reference", reference.to_str().unwrap(), "--report", report.to_str().unwrap(), "--proposal", "uniform",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(text.matches("hellinger=").count(), 4);
    assert!(text.contains("var=1 median_hellinger="));
    assert!(text.contains("var=1 pooled_samples=300 "));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn exact_with_evidence() {
    let model = data("chain3.uai");
    let ev = data("chain3.evid");
    let o = colcomp(&["exact", model.to_str().unwrap(), "--evidence", ev.to_str().unwrap()]);
    assert!(o.status.success());
    let m = mar_values(&stdout(&o));
    assert_eq!(m[1], vec![0.0, 1.0]);
    // P(A=1 | B=1) = 5 * 16 / 112
    assert!((m[0][1] - 80.0 / 112.0).abs() < 1e-15);
}

#[test]
fn eval_subcommand() {
    let half = data("half.mar");
    let skew = data("skew.mar");
    let o = colcomp(&["eval", half.to_str().unwrap(), half.to_str().unwrap()]);
    assert_eq!(stdout(&o), "query=0 hellinger=0\nmedian_hellinger=0\n");
    let o = colcomp(&["eval", half.to_str().unwrap(), skew.to_str().unwrap()]);
    let out = stdout(&o);
    let h: f64 = out.lines().last().unwrap().split('=').nth(1).unwrap().parse().unwrap();
    assert!((h - 0.1846).abs() < 1e-4, "{out}");
    let model = data("chain3.uai");
    let o = colcomp(&["eval", half.to_str().unwrap(), model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn compile_reports_and_dumps() {
    let model = data("chain3.uai");
    let dot = std::env::temp_dir().join(format!("colcomp-chain3-{}.dot", std::process::id()));
    let o = colcomp(&["compile", model.to_str().unwrap(), "--dump", dot.to_str().unwrap()]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("wmc=156\n"), "{out}");
    let nodes: usize = out.lines().next().unwrap().strip_prefix("nodes=").unwrap().parse().unwrap();
    assert!(nodes > 0);
    let text = std::fs::read_to_string(&dot).unwrap();
    assert!(text.starts_with("digraph"));
    std::fs::remove_file(&dot).unwrap();
}

#[test]
fn bad_inputs_have_error_categories() {
    let model = data("chain3.uai");
    let half = data("half.mar");
    assert_eq!(colcomp(&["exact", half.to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(colcomp(&["exact", "/nonexistent/model.uai"]).status.code(), Some(7));
    let o = colcomp(&["infer", model.to_str().unwrap(), "--query-var", "9"]);
    assert_eq!(o.status.code(), Some(4));
    let o = colcomp(&["infer", model.to_str().unwrap(), "--size-threshold", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
