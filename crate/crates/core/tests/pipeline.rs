use himpute::analysis::{pool_ensemble, AnalysisSpec, Family};
use himpute::data::{emit_csv, load_csv, write_matrix_file};
use himpute::imputation::{multiply_impute, ImputeOptions};
use himpute::simulation::{generate_dataset, SimConfig};
use himpute::spca::ReductionMethod;
use himpute::stochastic::RngStream;

const NA: [&str; 3] = ["NA", "", "NaN"];

fn simulated_csv(dir: &std::path::Path) -> std::path::PathBuf {
    let cfg = SimConfig {
        p: 80,
        ..SimConfig::default()
    };
    let ds = generate_dataset(&cfg, &RngStream::new(5, 0)).unwrap();
    let path = dir.join("sim.csv");
    emit_csv(&ds.data, &path).unwrap();
    path
}

#[test]
fn csv_round_trip_keeps_values_and_missing_cells() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulated_csv(dir.path());
    let a = load_csv(&path, "y1", &NA).unwrap();
    let again = dir.path().join("again.csv");
    emit_csv(&a, &again).unwrap();
    let b = load_csv(&again, "y1", &NA).unwrap();
    assert_eq!(a.mask(), b.mask());
    assert_eq!(a.column_names(), b.column_names());
    for (x, y) in a.values().iter().zip(b.values().iter()) {
        if x.is_nan() {
            assert!(y.is_nan());
        } else {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}

#[test]
fn file_to_pooled_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulated_csv(dir.path());
    let data = load_csv(&path, "y1", &NA).unwrap();
    let opts = ImputeOptions {
        forced: vec!["w".into(), "y2".into(), "y10".into()],
        ..ImputeOptions::default()
    };
    let ens = multiply_impute(&data, ReductionMethod::SdrSir, &opts, 10, &RngStream::new(9, 0)).unwrap();

    // completed files read back as fully observed data
    for (m, d) in ens.datasets.iter().enumerate() {
        let out = dir.path().join(format!("out_m{:02}.csv", m + 1));
        write_matrix_file(d, &ens.column_names, &out).unwrap();
        let back = load_csv(&out, "y1", &NA).unwrap();
        assert_eq!(back.n_missing(), 0);
    }

    let names = ens.column_names.clone();
    let spec = AnalysisSpec::from_names(&names, "w", &["y1", "y2", "y10"], Family::Linear).unwrap();
    let pooled = pool_ensemble(&ens, &spec, &[1]).unwrap();
    assert_eq!(pooled.m, 10);
    assert!(pooled.b[0] > 0.0);
    assert!((pooled.qbar[0] - 1.0).abs() < 0.6);
}
