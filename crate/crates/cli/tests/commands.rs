use std::path::Path;
use std::process::{Command, Output};

fn tileprobe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tileprobe"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run tileprobe")
}

fn gen(dir: &Path, name: &str, rows: &str, cols: &str) -> String {
    let out = dir.join(name).to_string_lossy().into_owned();
    let o = tileprobe(&[
        "gen-data", "--rows", rows, "--cols", cols, "--seed", "7", "--out", &out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.csv", "1000", "5");
    let b = gen(dir.path(), "b.csv", "1000", "5");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read_to_string(&a).unwrap().lines().count(), 1001);
}

#[test]
fn gen_data_zero_rows_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "empty.csv", "0", "4");
    assert_eq!(std::fs::read_to_string(f).unwrap(), "c0,c1,c2,c3\n");
}

#[test]
fn gen_data_without_out_is_usage_error() {
    let o = tileprobe(&["gen-data", "--rows", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--out"));
}

#[test]
fn replay_negative_phi_is_usage_error() {
    let o = tileprobe(&[
        "replay", "--file", "x.csv", "--mode", "approx", "--phi", "-1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("phi"));
}

#[test]
fn replay_exact_verify_reports_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "d.csv", "20000", "5");
    let prefix = dir.path().join("exact").to_string_lossy().into_owned();
    let o = tileprobe(&[
        "replay",
        "--file",
        &f,
        "--mode",
        "exact",
        "--verify",
        "--queries",
        "15",
        "--grid",
        "16",
        "--min-split",
        "64",
        "--agg",
        "count,sum:2,mean:3,min:4",
        "--report",
        &prefix,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("bound_violations=0"), "{stdout}");

    let mut r = csv::Reader::from_path(format!("{prefix}.csv")).unwrap();
    let headers = r.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>().join(","),
        "query_idx,mode,phi,elapsed_us,rows_read,tiles_split,agg,value,ci_lo,ci_hi,reported_bound,oracle,actual_error"
    );
    let mut n = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        assert_eq!(&rec[12], "0");
        n += 1;
    }
    assert_eq!(n, 15 * 4);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{prefix}.json")).unwrap()).unwrap();
    assert_eq!(json["totals"]["queries"], 15);
}

#[test]
fn replay_approx_verify_stays_within_phi_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "d.csv", "20000", "5");
    let mut prefixes = Vec::new();
    for (mode, phi, name) in [("exact", "0.05", "exact"), ("approx", "0.05", "approx5")] {
        let prefix = dir.path().join(name).to_string_lossy().into_owned();
        let o = tileprobe(&[
            "replay",
            "--file",
            &f,
            "--mode",
            mode,
            "--phi",
            phi,
            "--verify",
            "--queries",
            "20",
            "--grid",
            "16",
            "--min-split",
            "64",
            "--agg",
            "sum:2,mean:3",
            "--report",
            &prefix,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        prefixes.push(prefix);
    }
    let mut r = csv::Reader::from_path(format!("{}.csv", prefixes[1])).unwrap();
    for rec in r.records() {
        let rec = rec.unwrap();
        let bound: f64 = rec[10].parse().unwrap();
        let err: f64 = rec[12].parse().unwrap();
        assert!(bound <= 0.05 && err <= bound, "{rec:?}");
    }

    let exact_csv = format!("{}.csv", prefixes[0]);
    let approx_csv = format!("{}.csv", prefixes[1]);
    let o = tileprobe(&["plot", &exact_csv, &approx_csv]);
    assert!(o.status.success());
    let out = String::from_utf8_lossy(&o.stdout);
    let mut lines = out.lines();
    assert_eq!(
        lines.next().unwrap(),
        "# query_idx exact_rows_read exact_elapsed_ms approx5_rows_read approx5_elapsed_ms"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 20);
    let exact: f64 = rows.iter().map(|r| r[1]).sum();
    let approx: f64 = rows.iter().map(|r| r[3]).sum();
    assert!(approx <= exact);
}

#[test]
fn replay_missing_file_fails() {
    let o = tileprobe(&[
        "replay",
        "--file",
        "/nonexistent/data.csv",
        "--tracked",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));
}
