use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use eulercs_core::imaging::synthetic_corpus;
use eulercs_core::recovery::gen_sparse_signal;
use eulercs_core::SensingMatrix;

fn eulercs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eulercs"))
        .args(args)
        .current_dir(dir)
        .env("ES_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn kv(report: &str, key: &str) -> String {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {report}"))
        .to_string()
}

#[test]
fn gen_then_verify_index_11_5() {
    let dir = tempfile::tempdir().unwrap();
    let o = eulercs(dir.path(), &["gen", "--index", "11,5", "--out", "m.esm"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(fs::read_to_string(dir.path().join("m.esm")).unwrap().starts_with("ESM v1 rows=55 cols=121"));
    assert!(dir.path().join("m.esm.manifest.json").exists());

    let o = eulercs(dir.path(), &["verify", "m.esm"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = stdout(&o);
    assert_eq!(kv(&r, "coherence"), "0.2");
    assert_eq!(kv(&r, "welch_bound"), "0.1");
    assert_eq!(kv(&r, "density").parse::<f64>().unwrap(), 1.0 / 11.0);
    assert_eq!(kv(&r, "status"), "ok");
}

#[test]
fn prime_row_size_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let o = eulercs(dir.path(), &["gen", "--rows", "7", "--out", "m.esm"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("row size 7"));
    assert!(stderr(&o).contains("prime"));
    assert!(!dir.path().join("m.esm").exists());
}

#[test]
fn extension_of_twelve() {
    let dir = tempfile::tempdir().unwrap();
    let o = eulercs(dir.path(), &["gen", "--extend", "12", "--out", "e.esm"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = SensingMatrix::from_esm(&fs::read_to_string(dir.path().join("e.esm")).unwrap()).unwrap();
    assert_eq!((m.rows(), m.cols()), (24, 162));
}

#[test]
fn every_selector_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["--index", "3,2"],
        &["--index", "12,2"],
        &["--index", "23,10"],
        &["--rows", "6"],
        &["--rows", "8"],
        &["--rows", "12"],
        &["--rows", "60"],
        &["--extend", "20"],
        &["--extend", "24"],
        &["--ternary", "5,1,1"],
        &["--ternary", "3,1,1"],
        &["--ternary", "2,2,1"],
    ];
    for (i, sel) in cases.iter().enumerate() {
        let out = format!("m{i}.esm");
        let mut args = vec!["gen"];
        args.extend_from_slice(sel);
        args.extend_from_slice(&["--out", &out]);
        let o = eulercs(dir.path(), &args);
        assert_eq!(code(&o), 0, "{sel:?}: {}", stderr(&o));
        let o = eulercs(dir.path(), &["verify", &out]);
        assert_eq!(code(&o), 0, "{sel:?}: {}", stderr(&o));
        assert_eq!(kv(&stdout(&o), "rebuild"), "match");
    }
}

#[test]
fn small_matrix_pairs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&eulercs(dir.path(), &["gen", "--index", "3,2", "--out", "m.esm"])), 0);
    let o = eulercs(dir.path(), &["verify", "m.esm", "--report", "r.txt"]);
    assert_eq!(code(&o), 0);
    assert_eq!(kv(&stdout(&o), "max_overlap"), "1");
    assert!(stderr(&o).contains("36 column pairs"));
    assert_eq!(fs::read_to_string(dir.path().join("r.txt")).unwrap(), stdout(&o));
    assert!(dir.path().join("r.txt.manifest.json").exists());

    assert_eq!(code(&eulercs(dir.path(), &["gen", "--index", "3,2", "--out", "m.csv", "--format", "csv"])), 0);
    let csv = fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "1,0,0,0,0,1,0,1,0");
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn corrupted_support_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&eulercs(dir.path(), &["gen", "--index", "11,5", "--out", "m.esm"])), 0);
    let path = dir.path().join("m.esm");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // Column 1 is rows 1 12 23 34 45; move its first entry to row 2.
    lines[2] = lines[2].replacen("1 ", "2 ", 1);
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = eulercs(dir.path(), &["verify", "m.esm"]);
    assert_eq!(code(&o), 1);
    assert_eq!(kv(&stdout(&o), "status"), "fail");
}

#[test]
fn malformed_file_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.esm"), "ESM v1 rows=3 cols=2 alphabet=binary k=1\nunknown\n1\nx\n").unwrap();
    let o = eulercs(dir.path(), &["verify", "bad.esm"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&eulercs(dir.path(), &["gen", "--index", "3,2", "--rows", "6", "--out", "x"])), 2);
    assert_eq!(code(&eulercs(dir.path(), &["gen", "--out", "x"])), 2);
    assert_eq!(code(&eulercs(dir.path(), &["frobnicate"])), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_eulercs"))
        .args(["gen", "--index", "3,2", "--out", "x"])
        .current_dir(dir.path())
        .env("ES_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn unconstructible_index_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = eulercs(dir.path(), &["gen", "--index", "6,2", "--out", "x"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("k <= 1"), "{}", stderr(&o));
}

#[test]
fn sweep_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["bench", "sweep", "--index", "11,5", "--kmax", "27", "--kstep", "13", "--trials", "20", "--seed", "7"];
    let mut a = args.to_vec();
    a.extend_from_slice(&["--out", "a"]);
    let mut b = args.to_vec();
    b.extend_from_slice(&["--out", "b"]);
    assert_eq!(code(&eulercs(dir.path(), &a)), 0);
    assert_eq!(code(&eulercs(dir.path(), &b)), 0);
    let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    assert_eq!(read("a.csv"), read("b.csv"));
    let csv = String::from_utf8(read("a.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "1,100,20,20");
    assert_eq!(csv.lines().count(), 4);
    let manifest: serde_json::Value = serde_json::from_slice(&read("a.manifest.json")).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["subcommand"], "bench sweep");
}

#[test]
fn phase_curve() {
    let dir = tempfile::tempdir().unwrap();
    let o = eulercs(dir.path(), &["bench", "phase", "--M", "121", "--rows", "22,33,44", "--trials", "20", "--seed", "3", "--out", "p"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().nth(1).unwrap().starts_with(&format!("{},", 22.0 / 121.0)));
}

#[test]
fn patch_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let img = eulercs_core::imaging::sparse_haar_image(32, 32, 16, 4, 2, 30.0, 5).unwrap();
    let shifted = eulercs_core::Image::new(32, 32, img.pixels.iter().map(|v| v + 128.0).collect()).unwrap();
    shifted.write_pgm(&dir.path().join("x.pgm")).unwrap();
    let o = eulercs(dir.path(), &["bench", "recon", "--image", "x.pgm", "--rows", "64", "--patch", "16", "--family", "euler,gaussian", "--out", "r"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["r.euler.pgm", "r.gaussian.pgm", "r.euler.json", "r.csv", "r.manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("euler,64,256,4,"));

    let o = eulercs(dir.path(), &["bench", "recon", "--image", "x.pgm", "--rows", "55", "--patch", "16", "--out", "r"]);
    assert_eq!(code(&o), 3);
    let o = eulercs(dir.path(), &["bench", "recon", "--image", "x.pgm", "--rows", "64", "--patch", "12", "--out", "r"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn recover_from_measurements() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&eulercs(dir.path(), &["gen", "--index", "11,5", "--out", "m.esm"])), 0);
    let m = SensingMatrix::from_esm(&fs::read_to_string(dir.path().join("m.esm")).unwrap()).unwrap();
    let x = gen_sparse_signal(121, 2, 1, 0).unwrap().to_dense();
    let y = m.apply(&x);
    let join = |v: &[f64]| v.iter().map(|t| format!("{t:e}")).collect::<Vec<_>>().join("\n");
    fs::write(dir.path().join("y.txt"), join(&y)).unwrap();
    fs::write(dir.path().join("x.txt"), join(&x)).unwrap();
    for solver in ["omp", "bp"] {
        let o = eulercs(
            dir.path(),
            &["recover", "--matrix", "m.esm", "--measurements", "y.txt", "--sparsity", "2", "--solver", solver, "--reference", "x.txt", "--out", "est.txt"],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert!(summary["snr_db"].as_f64().unwrap() >= 100.0, "{solver}: {summary}");
        assert_eq!(fs::read_to_string(dir.path().join("est.txt")).unwrap().lines().count(), 121);
    }
}

#[test]
fn retrieval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthetic_corpus(3, 4, 64, 9);
    let mut list = String::new();
    for item in &corpus {
        let name = format!("{}.pgm", item.id);
        let clamped = eulercs_core::Image::new(64, 64, item.image.pixels.iter().map(|v| v.round()).collect()).unwrap();
        clamped.write_pgm(&dir.path().join(&name)).unwrap();
        list.push_str(&format!("{}\t{}\t{name}\n", item.id, item.label));
    }
    fs::write(dir.path().join("list.tsv"), &list).unwrap();

    let o = eulercs(dir.path(), &["cbir", "index", "--list", "list.tsv", "--index", "32,8", "--out", "db"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = eulercs(dir.path(), &["cbir", "query", "--db", "db", "--image", "c1_002.pgm", "--top", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let first = stdout(&o).lines().nth(1).unwrap().to_string();
    assert!(first.starts_with("1\tc1_002\tclass1\t"), "{first}");

    let o = eulercs(dir.path(), &["cbir", "score", "--db", "db", "--queries", "list.tsv", "--top", "4", "--out", "metrics.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["per_query"].as_array().unwrap().len(), 12);
    let rows = metrics["confusion"].as_array().unwrap();
    for row in rows {
        let total: u64 = row.as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum();
        assert_eq!(total, 4 * 4);
    }
}
