use std::fs::{self, File};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use himpute::reference::reference_rows;
use himpute::simulation::{run_study, write_results_csv, CovFamily, DesignPreset, Method, SimConfig};
use serde_json::json;

use crate::config::{Checks, FileConfig};
use crate::opts::ImputeFlags;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Preset grid: table1, table2, table3 or table4
    #[arg(long)]
    pub design: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of y variables; with --design, restricts the grid
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub c: Option<usize>,
    /// With --design, restricts the grid
    #[arg(long)]
    pub rho: Option<f64>,
    /// ar1 or block_cs
    #[arg(long)]
    pub cov_family: Option<String>,
    /// Methods to run (comma separated); all twelve when absent
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// Output directory (created if absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub flags: ImputeFlags,
}

fn base_config(args: &SimulateArgs, file: &FileConfig, checks: &mut Checks) -> SimConfig {
    let d = SimConfig::default();
    let cov_family = args.cov_family.as_deref().or(file.cov_family.as_deref());
    SimConfig {
        n: args.n.or(file.n).unwrap_or(d.n),
        p: args.p.or(file.p).unwrap_or(d.p),
        c: args.c.or(file.c).unwrap_or(d.c),
        rho: args.rho.or(file.rho).unwrap_or(d.rho),
        cov_family: checks.parse::<CovFamily>(cov_family, "cov_family").unwrap_or(d.cov_family),
        block_size: file.block_size.unwrap_or(d.block_size),
        eta: file.eta.or(d.eta),
        theta: file.theta.unwrap_or(d.theta),
        w_noise_var: file.w_noise_var.unwrap_or(d.w_noise_var),
        miss_model: file.miss_model.unwrap_or(d.miss_model),
        calibrate_intercept: file.calibrate_intercept.unwrap_or(d.calibrate_intercept),
        target_rate: file.target_rate.unwrap_or(d.target_rate),
        reps: args.reps.or(file.reps).unwrap_or(d.reps),
        m: args.m.or(file.m).unwrap_or(d.m),
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        knn_k: args.flags.knn_k(file, checks),
        ridge: args.flags.ridge.or(file.ridge).unwrap_or(d.ridge),
        impute_with_analysis_vars: file.impute_with_analysis_vars.unwrap_or(d.impute_with_analysis_vars),
        knn_include_outcome: file.knn_include_outcome.unwrap_or(d.knn_include_outcome),
        impute: args.flags.options(file, checks),
    }
}

pub fn run(args: &SimulateArgs, file: &FileConfig, threads: Option<usize>) -> Result<()> {
    let mut checks = Checks::default();
    let base = base_config(args, file, &mut checks);
    let design = checks.parse::<DesignPreset>(args.design.as_deref().or(file.design.as_deref()), "design");
    let methods: Vec<Method> = match args.methods.clone().or_else(|| file.methods.clone()) {
        Some(list) => list.iter().filter_map(|m| checks.parse::<Method>(Some(m), "methods")).collect(),
        None => Method::table_set(),
    };
    if methods.is_empty() && checks.0.is_empty() {
        checks.push("methods must not be empty");
    }
    let out = args.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from("."));

    let points = match design {
        Some(d) => {
            let p = args.p.or(file.p);
            let rho = args.rho.or(file.rho);
            let pts: Vec<SimConfig> = d
                .points(&base)
                .into_iter()
                .filter(|c| p.is_none_or(|p| c.p == p) && rho.is_none_or(|r| (c.rho - r).abs() < 1e-12))
                .collect();
            if pts.is_empty() {
                checks.push("the p/rho filter leaves no design points (grid: p in {200, 1000}, rho in {0.1, 0.5, 0.9})");
            }
            pts
        }
        None => vec![base.clone()],
    };
    let mut seen = Vec::new();
    for v in points.iter().flat_map(|c| c.violations()) {
        if !seen.contains(&v) {
            seen.push(v);
        }
    }
    seen.into_iter().for_each(|v| checks.push(v));
    checks.finish()?;

    let mut rows = Vec::new();
    let mut point_meta = Vec::new();
    for cfg in &points {
        log::info!("design point p={} c={} rho={} {}: {} reps", cfg.p, cfg.c, cfg.rho, cfg.cov_family, cfg.reps);
        let study = run_study(cfg, &methods, threads)?;
        let reference = design.map(|d| reference_rows(d, cfg.p, cfg.rho)).unwrap_or_default();
        point_meta.push(json!({
            "p": cfg.p,
            "c": cfg.c,
            "rho": cfg.rho,
            "cov_family": cfg.cov_family,
            "eta": cfg.eta(),
            "missing_fraction_mean": study.missing_fraction_mean,
            "failures": study.failures.iter().map(|(m, r, e)| json!({"method": m, "replicate": r, "error": e})).collect::<Vec<_>>(),
            "published_reference": reference,
        }));
        rows.extend(study.rows);
    }

    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let results = out.join("results.csv");
    write_results_csv(&rows, File::create(&results).with_context(|| format!("cannot create {}", results.display()))?)?;
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "seed": base.seed,
        "design": design.map(|d| format!("table{}", d.number())),
        "methods": methods.iter().map(|m| m.label()).collect::<Vec<_>>(),
        "config": base,
        "assumptions": {
            "block_size_assumed": base.block_size,
            "w_noise_is_variance": true,
            "missingness_intercept_calibrated": base.calibrate_intercept,
            "analysis_vars_in_imputation_model": base.impute_with_analysis_vars,
            "knn_uses_outcome": base.knn_include_outcome,
            "published_reference_rows_are_static": design.is_some(),
        },
        "points": point_meta,
    });
    let meta_path = out.join("run_meta.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")
        .with_context(|| format!("cannot write {}", meta_path.display()))?;
    log::info!("wrote {} rows to {}", rows.len(), results.display());
    Ok(())
}
