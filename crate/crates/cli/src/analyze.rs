use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use himpute::analysis::{fit_all, pooled_rows, rubin_pool_with, write_pooled_csv, AnalysisSpec, DfMethod, Family, FitResult, PooledRow};
use himpute::data::load_csv;
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use serde_json::json;

use crate::config::{Checks, FileConfig};
use crate::impute::na_tokens;

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Pooled CSV path (standard output when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the pooled rows as JSON
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Label for the method column
    #[arg(long)]
    pub method: Option<String>,
    /// rubin or barnard_rubin
    #[arg(long)]
    pub df_method: Option<String>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Completed CSVs, or directories holding out_m*.csv (repeatable)
    #[arg(long = "in", value_delimiter = ',')]
    pub input: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub outcome: Option<String>,
    /// Predictor columns (comma separated)
    #[arg(long, value_delimiter = ',')]
    pub predictors: Option<Vec<String>>,
    /// linear or logistic
    #[arg(long)]
    pub family: Option<String>,
    /// Terms to report (comma separated); all when absent
    #[arg(long, value_delimiter = ',')]
    pub terms: Option<Vec<String>>,
    #[arg(long = "na", value_delimiter = ',')]
    pub na_tokens: Option<Vec<String>>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// CSV with columns imputation, term, estimate, se and optionally df
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

struct Output {
    out: Option<PathBuf>,
    json: Option<PathBuf>,
    method: String,
    df_method: DfMethod,
}

fn output(args: &OutputArgs, file: &FileConfig, checks: &mut Checks) -> Output {
    let df = args.df_method.as_deref().or(file.df_method.as_deref()).unwrap_or("rubin");
    let df_method = match df.to_ascii_lowercase().replace('-', "_").as_str() {
        "rubin" => DfMethod::Rubin,
        "barnard_rubin" => DfMethod::BarnardRubin,
        _ => {
            checks.push(format!("df_method must be rubin or barnard_rubin (got '{df}')"));
            DfMethod::Rubin
        }
    };
    Output {
        out: args.out.clone().or_else(|| file.out.clone()),
        json: args.json.clone().or_else(|| file.json.clone()),
        method: args.method.clone().or_else(|| file.method.clone()).unwrap_or_else(|| "MI".into()),
        df_method,
    }
}

fn emit(rows: &[PooledRow], m: usize, o: &Output) -> Result<()> {
    match &o.out {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            write_pooled_csv(rows, f)?;
        }
        None => write_pooled_csv(rows, io::stdout().lock())?,
    }
    if let Some(path) = &o.json {
        let doc = json!({ "M": m, "rows": rows });
        let mut f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        writeln!(f, "{}", serde_json::to_string_pretty(&doc)?)?;
    }
    Ok(())
}

/// Expand directories to their `out_m*.csv` files in name order.
fn expand_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("cannot list {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with("out_m") && n.ends_with(".csv"))
                })
                .collect();
            if found.is_empty() {
                bail!("no out_m*.csv files in {}", p.display());
            }
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

pub fn run_analyze(args: &AnalyzeArgs, file: &FileConfig) -> Result<()> {
    let mut checks = Checks::default();
    let inputs = args
        .input
        .clone()
        .or_else(|| file.input.clone().map(|i| i.into_vec().into_iter().map(PathBuf::from).collect()));
    let inputs = checks.require(inputs, "--in (completed CSVs)");
    let outcome = checks.require(args.outcome.clone().or_else(|| file.outcome.clone()), "--outcome");
    let predictors = checks.require(args.predictors.clone().or_else(|| file.predictors.clone()), "--predictors");
    let family_name = args.family.clone().or_else(|| file.family.clone()).unwrap_or_else(|| "linear".into());
    let family = checks.parse::<Family>(Some(&family_name), "family");
    let terms = args.terms.clone().or_else(|| file.terms.clone());
    let na = na_tokens(&args.na_tokens, file);
    let o = output(&args.output, file, &mut checks);
    checks.finish()?;
    let (inputs, outcome, predictors, family) = (inputs.unwrap(), outcome.unwrap(), predictors.unwrap(), family.unwrap());

    let files = expand_inputs(&inputs)?;
    let na_refs: Vec<&str> = na.iter().map(String::as_str).collect();
    let mut names: Option<Vec<String>> = None;
    let mut datasets = Vec::with_capacity(files.len());
    for f in &files {
        let d = load_csv(f, &outcome, &na_refs).with_context(|| format!("reading {}", f.display()))?;
        if d.n_missing() > 0 {
            bail!("{}: outcome '{outcome}' has {} missing values", f.display(), d.n_missing());
        }
        match &names {
            None => names = Some(d.column_names().to_vec()),
            Some(n) if n.as_slice() != d.column_names() => bail!("{}: columns differ from {}", f.display(), files[0].display()),
            Some(_) => {}
        }
        datasets.push(d.values().clone());
    }
    let names = names.unwrap_or_default();
    let preds: Vec<&str> = predictors.iter().map(String::as_str).collect();
    let spec = AnalysisSpec::from_names(&names, &outcome, &preds, family)?;
    let term_names = spec.term_names(&names);
    let coefs = select_terms(&term_names, terms.as_deref())?;
    let fits = fit_all(&datasets, &spec)?;
    let pooled = rubin_pool_with(&fits, &coefs, o.df_method)?;
    emit(&pooled_rows(&o.method, &term_names, &pooled), pooled.m, &o)
}

fn select_terms(all: &[String], wanted: Option<&[String]>) -> Result<Vec<usize>> {
    let Some(wanted) = wanted else {
        return Ok(Vec::new());
    };
    wanted
        .iter()
        .map(|t| {
            all.iter()
                .position(|a| a == t)
                .with_context(|| format!("term '{t}' is not in the model ({})", all.join(", ")))
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct EstimateRecord {
    imputation: String,
    term: String,
    estimate: f64,
    se: f64,
    #[serde(default)]
    df: Option<f64>,
}

/// Per-imputation fits from a long table of estimates.
fn read_estimates(path: &Path) -> Result<(Vec<String>, Vec<FitResult>)> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut imputations: Vec<String> = Vec::new();
    let mut terms: Vec<String> = Vec::new();
    let mut cells: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
    let mut df = f64::INFINITY;
    for (line, rec) in rdr.deserialize::<EstimateRecord>().enumerate() {
        let rec = rec.with_context(|| format!("{}: record {}", path.display(), line + 1))?;
        if !(rec.estimate.is_finite() && rec.se.is_finite() && rec.se >= 0.0) {
            bail!("{}: record {} needs a finite estimate and a non-negative se", path.display(), line + 1);
        }
        let i = position_or_push(&mut imputations, rec.imputation);
        let t = position_or_push(&mut terms, rec.term);
        if cells.insert((i, t), (rec.estimate, rec.se)).is_some() {
            bail!("{}: duplicate entry for imputation {} term {}", path.display(), imputations[i], terms[t]);
        }
        if let Some(d) = rec.df {
            df = df.min(d);
        }
    }
    let mut fits = Vec::with_capacity(imputations.len());
    for (i, imp) in imputations.iter().enumerate() {
        let mut est = DVector::zeros(terms.len());
        let mut cov = DMatrix::zeros(terms.len(), terms.len());
        for (t, term) in terms.iter().enumerate() {
            let &(e, se) = cells
                .get(&(i, t))
                .with_context(|| format!("imputation {imp} has no estimate for term {term}"))?;
            est[t] = e;
            cov[(t, t)] = se * se;
        }
        fits.push(FitResult {
            estimates: est,
            cov,
            df,
            converged: true,
            iterations: 0,
        });
    }
    Ok((terms, fits))
}

fn position_or_push(v: &mut Vec<String>, s: String) -> usize {
    v.iter().position(|x| *x == s).unwrap_or_else(|| {
        v.push(s);
        v.len() - 1
    })
}

pub fn run_pool(args: &PoolArgs, file: &FileConfig) -> Result<()> {
    let mut checks = Checks::default();
    let input = args.input.clone().or_else(|| {
        file.input.clone().and_then(|i| i.into_vec().into_iter().next()).map(PathBuf::from)
    });
    let input = checks.require(input, "--in (estimates CSV)");
    let o = output(&args.output, file, &mut checks);
    checks.finish()?;
    let (terms, fits) = read_estimates(&input.unwrap())?;
    let pooled = rubin_pool_with(&fits, &[], o.df_method)?;
    emit(&pooled_rows(&o.method, &terms, &pooled), pooled.m, &o)
}
