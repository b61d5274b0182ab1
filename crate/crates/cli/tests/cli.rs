use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use himpute::analysis::{fit_all, rubin_pool, AnalysisSpec, Family};
use himpute::data::{emit_csv, load_csv};
use himpute::simulation::{generate_dataset, SimConfig};
use himpute::stochastic::RngStream;

fn himpute(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_himpute"))
        .args(args)
        .env_remove("HIMPUTE_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulated_csv(dir: &Path) -> PathBuf {
    let cfg = SimConfig {
        p: 60,
        ..SimConfig::default()
    };
    let ds = generate_dataset(&cfg, &RngStream::new(4, 0)).unwrap();
    let path = dir.join("data.csv");
    emit_csv(&ds.data, &path).unwrap();
    path
}

fn completed_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("out_m"))
        .collect();
    v.sort();
    v
}

#[test]
fn impute_writes_m_files_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated_csv(dir.path());
    let out = dir.path().join("imp");
    let r = himpute(&[
        "impute", "--in", s(&data), "--target", "y1", "--method", "spca_st", "--M", "30", "--seed", "7",
        "--force", "w,y2,y10", "--out", s(&out),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let files = completed_files(&out);
    assert_eq!(files.len(), 30);
    assert!(files[0].ends_with("out_m01.csv") && files[29].ends_with("out_m30.csv"));

    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("imputation_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["method"], "sPCA_ST");
    assert_eq!(meta["M"], 30);
    assert!(meta["diagnostics"]["d"].as_u64().unwrap() >= 1);
    assert!(!meta["diagnostics"]["screened_names"].as_array().unwrap().is_empty());
    assert_eq!(meta["diagnostics"]["forced_names"].as_array().unwrap().len(), 3);

    // observed cells unchanged, missing cells filled
    let original = load_csv(&data, "y1", &["NA"]).unwrap();
    let first = load_csv(&files[0], "y1", &["NA"]).unwrap();
    assert_eq!(first.n_missing(), 0);
    for i in 0..original.nrows() {
        for j in 0..original.ncols() {
            let a = original.values()[(i, j)];
            if !a.is_nan() {
                assert!((a - first.values()[(i, j)]).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    // same seed, same bytes
    let again = dir.path().join("imp2");
    let r = himpute(&[
        "impute", "--in", s(&data), "--target", "y1", "--method", "spca_st", "--M", "30", "--seed", "7",
        "--force", "w,y2,y10", "--out", s(&again),
    ]);
    assert_eq!(code(&r), 0);
    assert_eq!(fs::read(&files[12]).unwrap(), fs::read(again.join("out_m13.csv")).unwrap());
}

#[test]
fn impute_usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated_csv(dir.path());
    let r = himpute(&["impute", "--in", s(&data), "--method", "spca_st"]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("--target"));

    let r = himpute(&["impute", "--in", s(&data), "--target", "y1", "--method", "gs", "--M", "1"]);
    assert_eq!(code(&r), 2);
    let msg = stderr(&r);
    assert!(msg.contains("not an imputation method") && msg.contains("M must be at least 2"), "{msg}");

    let r = himpute(&["impute", "--bogus-flag"]);
    assert_eq!(code(&r), 2);
}

#[test]
fn impute_runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let r = himpute(&["impute", "--in", s(&dir.path().join("absent.csv")), "--target", "y1"]);
    assert_eq!(code(&r), 1);
    let data = simulated_csv(dir.path());
    let r = himpute(&["impute", "--in", s(&data), "--target", "nope", "--out", s(dir.path())]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("nope"));
}

#[test]
fn complete_input_gives_identical_copies() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("full.csv");
    let rows: String = (0..12)
        .map(|i| format!("{},{},{}\n", i as f64 * 0.5, (i * i) % 7, (i * 3) % 5))
        .collect();
    fs::write(&data, format!("y,a,b\n{rows}")).unwrap();
    let out = dir.path().join("imp");
    let r = himpute(&["impute", "--in", s(&data), "--target", "y", "--M", "3", "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert!(stderr(&r).contains("no missing values"));
    let files = completed_files(&out);
    assert_eq!(files.len(), 3);
    assert_eq!(fs::read(&files[0]).unwrap(), fs::read(&files[2]).unwrap());
}

#[test]
fn analyze_matches_library_pooling() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated_csv(dir.path());
    let imp = dir.path().join("imp");
    let r = himpute(&["impute", "--in", s(&data), "--target", "y1", "--method", "sdr_sir", "--M", "8", "--out", s(&imp)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let pooled_csv = dir.path().join("pooled.csv");
    let pooled_json = dir.path().join("pooled.json");
    let r = himpute(&[
        "analyze", "--in", s(&imp), "--outcome", "w", "--predictors", "y1,y2,y10", "--family", "linear",
        "--method", "SDR_SIR", "--out", s(&pooled_csv), "--json", s(&pooled_json),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));

    let files = completed_files(&imp);
    let sets: Vec<_> = files.iter().map(|f| load_csv(f, "w", &["NA"]).unwrap()).collect();
    let names = sets[0].column_names().to_vec();
    let spec = AnalysisSpec::from_names(&names, "w", &["y1", "y2", "y10"], Family::Linear).unwrap();
    let values: Vec<_> = sets.iter().map(|d| d.values().clone()).collect();
    let oracle = rubin_pool(&fit_all(&values, &spec).unwrap(), &[]).unwrap();

    let mut rdr = csv::Reader::from_path(&pooled_csv).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["method", "term", "estimate", "se", "df", "ci_low", "ci_high", "p_value"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(&rows[1][1], "y1");
    assert_eq!(&rows[1][0], "SDR_SIR");
    let est: f64 = rows[1][2].parse().unwrap();
    let se: f64 = rows[1][3].parse().unwrap();
    assert!((est - oracle.qbar[1]).abs() < 1e-12);
    assert!((se - oracle.t[1].sqrt()).abs() < 1e-12);

    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&pooled_json).unwrap()).unwrap();
    assert_eq!(doc["M"], 8);
    assert_eq!(doc["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn analyze_rejects_single_dataset_and_bad_family() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated_csv(dir.path());
    let imp = dir.path().join("imp");
    assert_eq!(code(&himpute(&["impute", "--in", s(&data), "--target", "y1", "--M", "2", "--out", s(&imp)])), 0);
    let one = imp.join("out_m01.csv");
    let r = himpute(&["analyze", "--in", s(&one), "--outcome", "w", "--predictors", "y1"]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("pooling requires M >= 2"), "{}", stderr(&r));

    let r = himpute(&["analyze", "--in", s(&imp), "--outcome", "w", "--predictors", "y1", "--family", "logistic"]);
    assert_eq!(code(&r), 1);

    let r = himpute(&["analyze", "--in", s(&imp), "--outcome", "w", "--predictors", "y1", "--family", "poisson"]);
    assert_eq!(code(&r), 2);
}

#[test]
fn logistic_analysis_has_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = RngStream::new(21, 0);
    let mut body = String::from("y,marker,g1,g2\n");
    for i in 0..120 {
        let (m, g1, g2) = (rng.std_normal(), rng.std_normal(), rng.std_normal());
        let eta = -0.3 + 1.0 * m + 0.5 * g1;
        let y = u8::from(rng.uniform() < 1.0 / (1.0 + (-eta).exp()));
        let marker = if i % 3 == 0 { "NA".to_string() } else { m.to_string() };
        body.push_str(&format!("{y},{marker},{g1},{g2}\n"));
    }
    let data = dir.path().join("bio.csv");
    fs::write(&data, body).unwrap();
    let imp = dir.path().join("imp");
    let r = himpute(&[
        "impute", "--in", s(&data), "--target", "marker", "--method", "spca_pmd", "--M", "10", "--force", "y",
        "--out", s(&imp),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let r = himpute(&["analyze", "--in", s(&imp), "--outcome", "y", "--predictors", "marker,g1,g2", "--family", "logistic", "--terms", "marker"]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = String::from_utf8(r.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("MI,marker,"));
    let p: f64 = lines[1].split(',').nth(7).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn pool_reproduces_hand_example() {
    let dir = tempfile::tempdir().unwrap();
    let est = dir.path().join("est.csv");
    fs::write(&est, "imputation,term,estimate,se\n1,x,1,1\n2,x,2,1\n3,x,3,1\n").unwrap();
    let r = himpute(&["pool", "--in", s(&est)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = String::from_utf8(r.stdout).unwrap();
    let f: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(f[1], "x");
    assert!((f[2].parse::<f64>().unwrap() - 2.0).abs() < 1e-12);
    assert!((f[3].parse::<f64>().unwrap() - (7.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert!((f[4].parse::<f64>().unwrap() - 6.125).abs() < 1e-12);

    fs::write(&est, "imputation,term,estimate,se\n1,x,1,1\n").unwrap();
    let r = himpute(&["pool", "--in", s(&est)]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("pooling requires M >= 2"));
}

#[test]
fn simulate_is_deterministic_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["simulate", "--reps", "4", "--p", "60", "--methods", "gs,cc,mi,sdr_sir,knn_v", "--M", "5", "--seed", "3"];
    let r = himpute(&[&args[..], &["--out", s(&a), "--threads", "1"]].concat());
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let r = Command::new(env!("CARGO_BIN_EXE_himpute"))
        .args(args)
        .args(["--out", s(&b)])
        .env("HIMPUTE_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let ra = fs::read(a.join("results.csv")).unwrap();
    assert_eq!(ra, fs::read(b.join("results.csv")).unwrap());
    let text = String::from_utf8(ra).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("method,p,c,rho,cov_family,bias,se,sd,mse,cr,reps_used"));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("run_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["config"]["reps"], 4);
}

#[test]
fn simulate_design_grid_and_reference_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t1");
    let r = himpute(&["simulate", "--design", "table1", "--reps", "2", "--methods", "gs,cc", "--seed", "1", "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 2 * 2);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run_meta.json")).unwrap()).unwrap();
    let points = meta["points"].as_array().unwrap();
    assert_eq!(points.len(), 6);
    assert_eq!(points[0]["published_reference"].as_array().unwrap().len(), 3);
}

#[test]
fn simulate_config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"reps": 0, "p": 60, "methods": ["gs"], "M": 4}"#).unwrap();
    let r = himpute(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("reps must be at least 1"));

    let r = himpute(&["simulate", "--config", s(&cfg), "--reps", "2", "--out", s(dir.path())]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));

    fs::write(&cfg, r#"{"reps": -1, "colour": "red", "rho": 2.0}"#).unwrap();
    let r = himpute(&["simulate", "--config", s(&cfg)]);
    assert_eq!(code(&r), 2);
    let msg = stderr(&r);
    assert!(msg.contains("unknown key 'colour'") && msg.contains("key 'reps'"), "{msg}");
}
