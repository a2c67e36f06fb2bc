use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn perispec(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perispec"))
        .arg(config)
        .arg("--output-dir")
        .arg(out)
        .args(extra)
        .env_remove("PERISPEC_THREADS")
        .output()
        .unwrap()
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn config(boundary: &str, n: usize, weight: &str, task: &str) -> String {
    format!(
        "[kernel]\nprofile = parabolic\nradius = 1.0\n\n[grid]\nboundary = {boundary}\nn_per_axis = {n}\n\n[weight]\n{weight}\n\n[task]\n{task}\n"
    )
}

#[test]
fn neumann_spectrum_at_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.conf",
        &config(
            "neumann",
            32,
            "expr = cos(2*pi*x)*sin(2*pi*t/T) + x",
            "kind = spectrum\nlambdas = 0, 1",
        ),
    );
    let out = dir.path().join("out");
    let o = perispec(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["task"], "spectrum");
    assert!(s["results"]["points"][0]["mu_n"].as_f64().unwrap().abs() < 1e-10);
    assert_eq!(s["setup"]["grid"]["boundary"], "neumann");
    let csv = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# perispec-csv v1"));
    assert!(lines.next().unwrap().starts_with("lambda,mu_n,"));
    assert_eq!(lines.count(), 2);
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("[PASS] zero point under conservative dispersal"));
    assert!(!report.contains("[FAIL]"));
}

#[test]
fn dirichlet_lambda_p_writes_curve() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "l.conf",
        &config(
            "dirichlet",
            32,
            "expr = sin(2*pi*t/T) + cos(2*pi*x) - 0.2",
            "kind = lambda_p",
        ),
    );
    let out = dir.path().join("out");
    let o = perispec(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["results"]["status"], "unique_root");
    let lp = s["results"]["lambda_p"].as_f64().unwrap();
    assert!((lp - 1.11).abs() < 0.01, "λᵖ = {lp}");
    let curve = fs::read_to_string(out.join("curve.csv")).unwrap();
    assert!(curve.starts_with("# perispec-csv v1\nlambda,mu\n"));
    assert!(curve.lines().count() > 4);
    // stdout carries the same report
    assert!(String::from_utf8_lossy(&o.stdout).contains("status: unique_root"));
}

#[test]
fn sampled_weight_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let n = 24;
    let n_time = 64;
    let mut rows = String::from("t_index,node_index,value\n");
    for k in 0..n_time {
        let t = k as f64 / n_time as f64;
        for j in 0..n {
            let x = (j as f64 + 0.5) / n as f64;
            let v = (2.0 * std::f64::consts::PI * t).sin() + (2.0 * std::f64::consts::PI * x).cos()
                - 0.2;
            rows.push_str(&format!("{k},{j},{v:.17e}\n"));
        }
    }
    fs::write(dir.path().join("w.csv"), rows).unwrap();
    let sampled = write_config(
        dir.path(),
        "a.conf",
        &config("dirichlet", n, "csv = w.csv", "kind = lambda_p"),
    );
    let closed = write_config(
        dir.path(),
        "b.conf",
        &config(
            "dirichlet",
            n,
            "expr = sin(2*pi*t/T) + cos(2*pi*x) - 0.2",
            "kind = lambda_p",
        ),
    );
    let (oa, ob) = (dir.path().join("a"), dir.path().join("b"));
    assert!(perispec(&sampled, &oa, &[]).status.success());
    assert!(perispec(&closed, &ob, &[]).status.success());
    let la = summary(&oa)["results"]["lambda_p"].as_f64().unwrap();
    let lb = summary(&ob)["results"]["lambda_p"].as_f64().unwrap();
    assert!(((la - lb) / lb).abs() < 1e-2, "{la} vs {lb}");
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.conf",
        &config(
            "periodic",
            24,
            "expr = cos(2*pi*x) - 0.2 + sin(2*pi*t/T)",
            "kind = spectrum\nlambda_range = 0, 2, 5",
        ),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(perispec(&cfg, &a, &["--threads", "1"]).status.success());
    assert!(perispec(&cfg, &b, &["--threads", "4"]).status.success());
    for f in ["spectrum.csv", "eigenfunctions.csv", "summary.json"] {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        assert_eq!(x, y, "{f} differs");
        assert!(!x.contains(&b'\r'));
    }
}

#[test]
fn validate_passes_on_a_standard_case() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "v.conf",
        &config(
            "neumann",
            16,
            "expr = cos(2*pi*x) - 0.2 + sin(2*pi*t/T)",
            "kind = validate\nseed = 7",
        ),
    );
    let out = dir.path().join("out");
    let o = perispec(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let s = summary(&out);
    assert_eq!(s["results"]["failed"], 0);
    assert!(s["results"]["passed"].as_u64().unwrap() >= 14);
    assert!(fs::read_to_string(out.join("validate.csv"))
        .unwrap()
        .contains(",pass,"));
}

#[test]
fn validate_failure_exits_one() {
    // Four time samples land on zeros of sin²(8πt), so m̂ misses the negative
    // mean of the second term and the averaging inequality breaks. The term
    // vanishes at the maximizer x = 0, so P(m) and the root stay well posed.
    let dir = TempDir::new().unwrap();
    let body = config(
        "dirichlet",
        16,
        "expr = cos(2*pi*x) - 3*sin(8*pi*t/T)^2*sin(pi*x)^2",
        "kind = validate",
    ) + "\n[numerics]\nn_time = 4\n";
    let cfg = write_config(dir.path(), "v.conf", &body);
    let out = dir.path().join("out");
    let o = perispec(&cfg, &out, &[]);
    assert_eq!(
        o.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    assert!(summary(&out)["results"]["failed"].as_u64().unwrap() > 0);
    assert!(fs::read_to_string(out.join("report.txt"))
        .unwrap()
        .contains("[FAIL]"));
}

#[test]
fn malformed_config_exits_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cases = [
        config("dirichlet", 16, "expr = sin(", "kind = lambda_p"),
        config("sideways", 16, "expr = x", "kind = lambda_p"),
        config("dirichlet", 16, "expr = x", "kind = spectrum"),
        config("dirichlet", 16, "expr = x", "kind = lambda_p")
            .replace("radius = 1.0", "radius = 1.0\nwidth = 2"),
    ];
    for body in cases {
        let cfg = write_config(dir.path(), "bad.conf", &body);
        let o = perispec(&cfg, &out, &[]);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{body}\n{}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(String::from_utf8_lossy(&o.stderr).contains("configuration error"));
    }
    let o = perispec(&dir.path().join("missing.conf"), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unstable_time_step_exits_three() {
    let dir = TempDir::new().unwrap();
    let body = config(
        "dirichlet",
        16,
        "expr = -1",
        "kind = spectrum\nlambdas = 400",
    ) + "\n[numerics]\nn_steps = 2\n";
    let cfg = write_config(dir.path(), "u.conf", &body);
    let o = perispec(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("numerical failure"));
}

#[test]
fn kpp_scan_brackets_the_linear_threshold() {
    let dir = TempDir::new().unwrap();
    let body = config(
        "dirichlet",
        24,
        "expr = sin(2*pi*t/T) + cos(2*pi*x) - 0.2",
        "kind = kpp_scan\nlambdas = 0.7, 1.4",
    ) + "\n[kpp]\nfamily = logistic\nc = 2\n";
    let cfg = write_config(dir.path(), "k.conf", &body);
    let out = dir.path().join("out");
    let o = perispec(&cfg, &out, &["--threads", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["results"]["rows"][0]["verdict"], "extinction");
    assert_eq!(s["results"]["rows"][1]["verdict"], "persistence");
    assert_eq!(s["results"]["bracket_contains_lambda_p"], true);
    assert!(out.join("u_star.csv").exists());
}

#[test]
fn thread_count_from_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.conf",
        &config("neumann", 8, "expr = x", "kind = spectrum\nlambdas = 0"),
    );
    let o = Command::new(env!("CARGO_BIN_EXE_perispec"))
        .arg(&cfg)
        .arg("--output-dir")
        .arg(dir.path().join("out"))
        .env("PERISPEC_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_perispec"))
        .arg(&cfg)
        .arg("--output-dir")
        .arg(dir.path().join("out"))
        .env("PERISPEC_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
}
