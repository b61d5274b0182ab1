use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use himpute::baselines::{knn_ensemble, mi_full, BaselineKind, KnnMode};
use himpute::data::{load_csv, write_matrix_file};
use himpute::imputation::{multiply_impute, MIEnsemble, DEFAULT_M};
use himpute::simulation::Method;
use himpute::stochastic::RngStream;
use serde_json::json;

use crate::config::{Checks, FileConfig};
use crate::opts::ImputeFlags;

pub const DEFAULT_NA: [&str; 3] = ["NA", "", "NaN"];

#[derive(Debug, Args)]
pub struct ImputeArgs {
    /// Input CSV with a header row
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Column with missing values
    #[arg(long)]
    pub target: Option<String>,
    /// spca_st, spca_pmd, spca_l, spca_al, sdr_sir, sdr_save, sdr_phd, mi_full, knn_s or knn_v
    #[arg(long)]
    pub method: Option<String>,
    /// Number of imputations
    #[arg(long = "M")]
    pub m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tokens read as missing (comma separated)
    #[arg(long = "na", value_delimiter = ',')]
    pub na_tokens: Option<Vec<String>>,
    #[command(flatten)]
    pub flags: ImputeFlags,
}

pub fn na_tokens(flag: &Option<Vec<String>>, file: &FileConfig) -> Vec<String> {
    flag.clone()
        .or_else(|| file.na_tokens.clone())
        .unwrap_or_else(|| DEFAULT_NA.iter().map(|s| s.to_string()).collect())
}

pub fn run(args: &ImputeArgs, file: &FileConfig) -> Result<()> {
    let mut checks = Checks::default();
    let input = args.input.clone().or_else(|| {
        file.input.clone().and_then(|i| i.into_vec().into_iter().next()).map(PathBuf::from)
    });
    let input = checks.require(input, "--in (input CSV)");
    let target = checks.require(args.target.clone().or_else(|| file.target.clone()), "--target");
    let method_name = args.method.clone().or_else(|| file.method.clone()).unwrap_or_else(|| "spca_st".into());
    let method = checks.parse::<Method>(Some(&method_name), "method");
    if let Some(Method::Baseline(b @ (BaselineKind::Gs | BaselineKind::Cc))) = method {
        checks.push(format!("method '{}' is an analysis, not an imputation method", b.tag()));
    }
    let m = args.m.or(file.m).unwrap_or(DEFAULT_M);
    if m < 2 {
        checks.push(format!("M must be at least 2 (got {m})"));
    }
    let seed = args.seed.or(file.seed).unwrap_or(1);
    let out = args.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    let opts = args.flags.options(file, &mut checks);
    let k = args.flags.knn_k(file, &mut checks);
    let na = na_tokens(&args.na_tokens, file);
    checks.finish()?;
    let (input, target, method) = (input.unwrap(), target.unwrap(), method.unwrap());

    let na_refs: Vec<&str> = na.iter().map(String::as_str).collect();
    let data = load_csv(&input, &target, &na_refs)?;
    let rng = RngStream::new(seed, 0);
    let ens: MIEnsemble = match method {
        Method::Proposed(r) => multiply_impute(&data, r, &opts, m, &rng)?,
        Method::Baseline(BaselineKind::MiFull) => mi_full(&data, m, opts.ridge, &rng)?,
        Method::Baseline(BaselineKind::KnnS) => knn_ensemble(&data, k, KnnMode::Subjects, m)?,
        Method::Baseline(BaselineKind::KnnV) => knn_ensemble(&data, k, KnnMode::Variables, m)?,
        Method::Baseline(_) => unreachable!("rejected above"),
    };
    for w in &ens.diagnostics.warnings {
        log::warn!("{w}");
    }

    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let width = m.to_string().len().max(2);
    let mut files = Vec::with_capacity(m);
    for (i, d) in ens.datasets.iter().enumerate() {
        let name = format!("out_m{:0width$}.csv", i + 1);
        write_matrix_file(d, &ens.column_names, out.join(&name))?;
        files.push(name);
    }
    let meta = json!({
        "method": method.label(),
        "method_tag": method.tag(),
        "M": m,
        "seed": seed,
        "input": input,
        "target": target,
        "n": data.nrows(),
        "n_missing": data.n_missing(),
        "knn_k": k,
        "options": opts,
        "diagnostics": ens.diagnostics,
        "files": files,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let meta_path = out.join("imputation_meta.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")
        .with_context(|| format!("cannot write {}", meta_path.display()))?;
    log::info!("wrote {m} completed datasets to {}", out.display());
    Ok(())
}
