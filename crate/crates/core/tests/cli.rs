//! End-to-end checks of the `posthoc-sr` binary.

use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

use rand::Rng;
use rand_distr::StandardNormal;

use posthoc_sr::cli::ReportDocument;
use posthoc_sr::mc::replication_rng;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posthoc-sr"))
        .args(args)
        .env_remove("POSTHOC_SR_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Five correlated monthly series with a date column; the last asset has a
/// clearly higher mean.
fn write_panel(path: &Path, n: usize) {
    let mut rng = replication_rng(99, 0);
    let mut s = String::from("date,Cnsmr,Manuf,HiTec,Other,Hlth\n");
    for i in 0..n {
        let common: f64 = rng.sample(StandardNormal);
        let row: Vec<String> = (0..5)
            .map(|j| {
                let own: f64 = rng.sample(StandardNormal);
                let mean = if j == 4 { 0.012 } else { 0.004 };
                format!("{:.6}", mean + 0.04 * (0.9 * common + 0.436 * own))
            })
            .collect();
        s.push_str(&format!("{}-{:02},{}\n", 1927 + i / 12, i % 12 + 1, row.join(",")));
    }
    std::fs::write(path, s).unwrap();
}

fn text_fields(text: &str) -> HashMap<String, f64> {
    text.lines()
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            let (k, v) = (it.next()?, it.next()?);
            Some((k.to_string(), v.parse().ok()?))
        })
        .collect()
}

#[test]
fn test_formats_agree() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("ind.csv");
    write_panel(&input, 600);
    let inp = input.to_str().unwrap();
    let svg = dir.path().join("chart.svg");

    let j = bin(&["test", "--input", inp, "--freq", "monthly", "--format", "json", "--svg", svg.to_str().unwrap()]);
    assert_eq!(j.status.code(), Some(0), "{}", stderr(&j));
    let doc = ReportDocument::from_json(&stdout(&j)).unwrap();
    assert_eq!(ReportDocument::from_json(&doc.to_json().unwrap()).unwrap(), doc);
    assert_eq!(doc.schema_version, 1);
    assert_eq!(doc.input.n, 600);
    assert_eq!(doc.report.asset_names.len(), 5);
    assert!(doc.input.rho_median.is_some() && doc.input.sample_correlation.is_some());

    let t = bin(&["test", "--input", inp, "--freq", "monthly", "--format", "text"]);
    let fields = text_fields(&stdout(&t));
    let c = bin(&["test", "--input", inp, "--freq", "monthly", "--format", "csv"]);
    let csv_text = stdout(&c);
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let mut csv_fields = HashMap::new();
    let mut csv_sr = Vec::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        match &rec[0] {
            "sr" => csv_sr.push(rec[3].parse::<f64>().unwrap()),
            "reject" | "df_mode" => {}
            key => {
                csv_fields.insert(key.to_string(), rec[3].parse::<f64>().unwrap());
            }
        }
    }

    let r = &doc.report;
    let json_scalars = doc.scalars();
    assert!(!json_scalars.is_empty());
    for (name, v) in json_scalars {
        let tv = fields[name];
        assert!((tv - v).abs() <= 5e-7, "{name}: text {tv} json {v}");
        assert_eq!(csv_fields[name], v, "{name}");
    }
    assert_eq!(csv_sr, r.sr.values());
    for (name, v) in r.asset_names.iter().zip(r.sr.values()) {
        assert!((fields[name.as_str()] - v).abs() <= 5e-7);
    }

    let svg_text = std::fs::read_to_string(svg).unwrap();
    let xml = roxmltree::Document::parse(&svg_text).unwrap();
    let bars = xml.descendants().filter(|n| n.attribute("class") == Some("error-bar")).count();
    assert_eq!(bars, 5);
    let legend: String = xml
        .descendants()
        .filter(|n| n.attribute("class") == Some("legend"))
        .flat_map(|n| n.descendants().filter_map(|d| d.text()))
        .collect();
    assert!(legend.contains("α = 0.05") && legend.contains("df = n-1"), "{legend}");
}

#[test]
fn test_writes_to_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("ind.csv");
    write_panel(&input, 120);
    let out = dir.path().join("r.json");
    let o = bin(&[
        "test", "--input", input.to_str().unwrap(), "--freq", "monthly", "--rho", "0.5", "--df", "inf",
        "--format", "json", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    let doc = ReportDocument::from_json(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(doc.report.rho_used, 0.5);
    assert_eq!(doc.report.selected_cutoff, doc.report.hsd_inf);
}

#[test]
fn duplicated_columns_give_zero_range() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("dup.csv");
    std::fs::write(&input, "A,B\n0.01,0.01\n-0.02,-0.02\n0.03,0.03\n0.00,0.00\n0.015,0.015\n").unwrap();
    let o = bin(&["test", "--input", input.to_str().unwrap(), "--freq", "daily", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = ReportDocument::from_json(&stdout(&o)).unwrap();
    assert_eq!(doc.report.observed_range, 0.0);
    assert_eq!(doc.report.range_pvalue, 1.0);
    assert!(doc.report.rejected_pairs().is_empty());
    assert!(!doc.report.warnings.is_empty());
}

#[test]
fn input_errors_exit_2_and_name_the_culprit() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("single.csv", "A\n0.1\n0.2\n0.3\n", "at least 2 assets"),
        ("bad.csv", "A,B\n0.1,0.2\n0.3,x\n0.2,0.1\n", "`B`"),
        ("short.csv", "A,B\n0.1,0.2\n0.3\n", "line 3"),
        ("flat.csv", "A,B\n0.1,0.2\n0.1,0.3\n0.1,0.1\n", "`A`"),
    ];
    for (name, body, needle) in cases {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        let o = bin(&["test", "--input", p.to_str().unwrap(), "--freq", "daily"]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{name}: {}", stderr(&o));
    }
    let o = bin(&["test", "--input", dir.path().join("missing.csv").to_str().unwrap(), "--freq", "daily"]);
    assert_eq!(o.status.code(), Some(2));
    let p = dir.path().join("ok.csv");
    std::fs::write(&p, "A,B\n0.1,0.2\n0.3,0.1\n0.2,0.25\n").unwrap();
    let o = bin(&["test", "--input", p.to_str().unwrap(), "--freq", "daily", "--rho", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bin(&["test", "--input", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "--freq is required");
}

fn write_funds(path: &Path, rows: &[(&str, f64, f64)]) {
    let mut s = String::from("name,annual_return_pct,annual_sd_pct\n");
    for (n, r, sd) in rows {
        s.push_str(&format!("\"{n}\",{r},{sd}\n"));
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn summary_thirty_four_funds() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("funds.csv");
    // ratios spread evenly over the published range 0.549 .. 1.087
    let rows: Vec<(String, f64, f64)> = (0..34)
        .map(|i| (format!("Fund {i}"), 10.0 * (0.549 + 0.538 * i as f64 / 33.0), 10.0))
        .collect();
    let rows_ref: Vec<(&str, f64, f64)> = rows.iter().map(|(n, r, s)| (n.as_str(), *r, *s)).collect();
    write_funds(&p, &rows_ref);
    let o = bin(&[
        "test-summary", "--input", p.to_str().unwrap(), "--n", "120", "--freq", "monthly", "--rho", "0.85",
        "--format", "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = ReportDocument::from_json(&stdout(&o)).unwrap();
    assert!((doc.report.selected_cutoff - 0.68).abs() < 0.01, "{}", doc.report.selected_cutoff);
    assert!(doc.report.rejected_pairs().is_empty());
}

#[test]
fn summary_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("twins.csv");
    write_funds(&p, &[("Twin A", 8.0, 12.0), ("Twin B", 8.0, 12.0)]);
    let base = ["test-summary", "--input", p.to_str().unwrap(), "--freq", "annual"];
    let o = bin(&[&base[..], &["--n", "40", "--rho", "0.9", "--format", "json"]].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = ReportDocument::from_json(&stdout(&o)).unwrap();
    assert!(doc.report.rejected_pairs().is_empty());

    assert_eq!(bin(&[&base[..], &["--rho", "0.9"]].concat()).status.code(), Some(4));
    assert_eq!(bin(&[&base[..], &["--n", "40"]].concat()).status.code(), Some(4));

    let z = dir.path().join("zero.csv");
    write_funds(&z, &[("Good", 8.0, 12.0), ("Broken Fund", 5.0, 0.0)]);
    let o = bin(&["test-summary", "--input", z.to_str().unwrap(), "--freq", "annual", "--n", "10", "--rho", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Broken Fund"), "{}", stderr(&o));
}

#[test]
fn simulate_single_replication_to_stdout() {
    let o = bin(&[
        "simulate", "--experiment", "null-rho", "--reps", "1", "--seed", "3", "--n-grid", "60", "--p-grid", "4",
        "--rho-grid", "0.3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let mut rdr = csv::Reader::from_reader(out.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    let rate: f64 = rows[0][8].parse().unwrap();
    assert!(rate == 0.0 || rate == 1.0);
    assert!(rows[0][10].parse::<u64>().is_ok());
}

#[test]
fn simulate_usage_errors() {
    assert_eq!(bin(&["simulate", "--experiment", "null-everything"]).status.code(), Some(4));
    assert_eq!(bin(&["simulate"]).status.code(), Some(4));
    let o = bin(&["simulate", "--experiment", "custom", "--reps", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_seed_from_environment() {
    let run = |seed: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_posthoc-sr"));
        c.args([
            "simulate", "--experiment", "custom", "--reps", "50", "--n-grid", "40", "--p-grid", "3",
        ]);
        match seed {
            Some(s) => c.env("POSTHOC_SR_SEED", s),
            None => c.env_remove("POSTHOC_SR_SEED"),
        };
        String::from_utf8(c.output().unwrap().stdout).unwrap()
    };
    assert_eq!(run(Some("77")), run(Some("77")));
    assert_ne!(run(Some("77")), run(Some("78")));
}

#[test]
fn simulate_null_scan_small_n_large_p() {
    let o = bin(&[
        "simulate", "--experiment", "null-scan-np", "--reps", "2000", "--seed", "1", "--n-grid", "20", "--p-grid", "32",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let mut rdr = csv::Reader::from_reader(out.as_bytes());
    let mut rate = HashMap::new();
    for r in rdr.records() {
        let r = r.unwrap();
        rate.insert(r[5].to_string(), r[8].parse::<f64>().unwrap());
    }
    assert!(rate["inf"] > rate["n-1"], "{rate:?}");
}

#[test]
fn simulate_null_basic_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nb.csv");
    let o = bin(&[
        "simulate", "--experiment", "null-basic", "--reps", "300", "--seed", "2", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = std::fs::read_to_string(&out).unwrap();
    assert_eq!(table.lines().count(), 3);
    let raw = std::fs::read_to_string(dir.path().join("nb.raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 1 + 2 * 300);
    let qq = std::fs::read_to_string(dir.path().join("nb.qq.csv")).unwrap();
    assert_eq!(qq.lines().count(), 1 + 99);
    let pp = std::fs::read_to_string(dir.path().join("nb.pp.csv")).unwrap();
    assert_eq!(pp.lines().count(), 1 + 2 * 300);
    let mut rdr = csv::Reader::from_reader(pp.as_bytes());
    for r in rdr.records() {
        let v: f64 = r.unwrap()[3].parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
}
