//! Flat JSON configuration shared by all subcommands.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{Map, Value};

/// Usage or configuration problems; every entry is reported.
#[derive(Debug)]
pub struct ConfigError(pub Vec<String>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() == 1 {
            return write!(f, "{}", self.0[0]);
        }
        write!(f, "invalid configuration ({} problems):", self.0.len())?;
        for msg in &self.0 {
            write!(f, "\n  - {msg}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    pub fn into_vec(self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<OneOrMany>,
    pub out: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub target: Option<String>,
    pub na_tokens: Option<Vec<String>>,
    pub method: Option<String>,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,

    pub screen_cap: Option<usize>,
    pub sparsity: Option<f64>,
    pub component_rule: Option<String>,
    pub max_components: Option<usize>,
    pub nslices: Option<usize>,
    pub n_perm: Option<usize>,
    pub alpha: Option<f64>,
    pub max_dim: Option<usize>,
    pub phd_response_based: Option<bool>,
    pub ridge: Option<f64>,
    pub refit_per_draw: Option<bool>,
    pub forced: Option<Vec<String>>,
    pub knn_k: Option<usize>,

    pub outcome: Option<String>,
    pub predictors: Option<Vec<String>>,
    pub family: Option<String>,
    pub terms: Option<Vec<String>>,
    pub df_method: Option<String>,

    pub design: Option<String>,
    pub methods: Option<Vec<String>>,
    pub reps: Option<usize>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub c: Option<usize>,
    pub rho: Option<f64>,
    pub cov_family: Option<String>,
    pub block_size: Option<usize>,
    pub eta: Option<f64>,
    pub theta: Option<[f64; 4]>,
    pub w_noise_var: Option<f64>,
    pub miss_model: Option<[f64; 4]>,
    pub calibrate_intercept: Option<bool>,
    pub target_rate: Option<f64>,
    pub impute_with_analysis_vars: Option<bool>,
    pub knn_include_outcome: Option<bool>,
}

impl FileConfig {
    /// Parse a document, listing every unknown key and every badly typed
    /// value rather than stopping at the first.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ConfigError(vec![format!("config is not valid JSON: {e}")]))?;
        let Value::Object(map) = value else {
            return Err(ConfigError(vec!["config must be a JSON object".into()]));
        };
        let mut problems = Vec::new();
        for (key, v) in &map {
            let mut one = Map::new();
            one.insert(key.clone(), v.clone());
            if let Err(e) = serde_json::from_value::<FileConfig>(Value::Object(one)) {
                problems.push(if e.to_string().starts_with("unknown field") {
                    format!("unknown key '{key}'")
                } else {
                    format!("key '{key}': {e}")
                });
            }
        }
        if !problems.is_empty() {
            return Err(ConfigError(problems));
        }
        serde_json::from_value(Value::Object(map)).map_err(|e| ConfigError(vec![e.to_string()]))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(vec![format!("cannot read config {}: {e}", path.display())]))?;
        Self::parse(&text).map_err(|ConfigError(v)| {
            ConfigError(v.into_iter().map(|m| format!("{}: {m}", path.display())).collect())
        })
    }
}

/// Accumulates violations so a command can report all of them at once.
#[derive(Debug, Default)]
pub struct Checks(pub Vec<String>);

impl Checks {
    pub fn require<T>(&mut self, value: Option<T>, what: &str) -> Option<T> {
        if value.is_none() {
            self.0.push(format!("missing required {what}"));
        }
        value
    }

    pub fn parse<T: std::str::FromStr>(&mut self, value: Option<&str>, what: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        match value?.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                self.0.push(format!("{what}: {e}"));
                None
            }
        }
    }

    pub fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    pub fn finish(self) -> Result<(), ConfigError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(self.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_problems_are_listed() {
        let err = FileConfig::parse(r#"{"reps": "many", "bogus": 1, "seed": 3, "other": true}"#).unwrap_err();
        assert_eq!(err.0.len(), 3, "{err}");
        assert!(err.0.iter().any(|m| m == "unknown key 'bogus'"));
        assert!(err.0.iter().any(|m| m == "unknown key 'other'"));
        assert!(err.0.iter().any(|m| m.starts_with("key 'reps'")));
    }

    #[test]
    fn input_accepts_string_or_list() {
        let a = FileConfig::parse(r#"{"input": "a.csv", "M": 5}"#).unwrap();
        assert_eq!(a.input.unwrap().into_vec(), vec!["a.csv"]);
        assert_eq!(a.m, Some(5));
        let b = FileConfig::parse(r#"{"input": ["a.csv", "b.csv"]}"#).unwrap();
        assert_eq!(b.input.unwrap().into_vec().len(), 2);
    }

    #[test]
    fn non_object_rejected() {
        assert!(FileConfig::parse("[1, 2]").is_err());
        assert!(FileConfig::parse("{").is_err());
    }
}
