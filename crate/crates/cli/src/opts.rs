use clap::Args;
use himpute::imputation::ImputeOptions;
use himpute::spca::ComponentRule;

use crate::config::{Checks, FileConfig};

/// Imputation knobs shared by `impute` and `simulate`.
#[derive(Debug, Clone, Default, Args)]
pub struct ImputeFlags {
    /// Upper bound on the number of screened variables
    #[arg(long)]
    pub screen_cap: Option<usize>,
    /// sPCA sparsity in (0, 1]; 1 means no thresholding
    #[arg(long)]
    pub sparsity: Option<f64>,
    /// Component rule for sPCA: first, var60 or var80
    #[arg(long = "components")]
    pub component_rule: Option<String>,
    #[arg(long)]
    pub max_components: Option<usize>,
    /// Number of SIR/SAVE slices
    #[arg(long)]
    pub nslices: Option<usize>,
    /// Permutations for the SIR/SAVE dimension test
    #[arg(long)]
    pub n_perm: Option<usize>,
    /// Level of the dimension tests
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_dim: Option<usize>,
    /// Response-based instead of residual-based PHD
    #[arg(long)]
    pub phd_response_based: bool,
    /// Ridge factor on diag(W'W) in the posterior draw
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Refit screening and reduction on a bootstrap sample for every draw
    #[arg(long)]
    pub refit_per_draw: bool,
    /// Columns entered into the imputation model unscreened (comma separated)
    #[arg(long = "force", value_delimiter = ',')]
    pub forced: Option<Vec<String>>,
    /// Neighbors for the KNN methods
    #[arg(long)]
    pub knn_k: Option<usize>,
}

impl ImputeFlags {
    pub fn options(&self, file: &FileConfig, checks: &mut Checks) -> ImputeOptions {
        let mut o = ImputeOptions::default();
        o.screen_cap = self.screen_cap.or(file.screen_cap).or(o.screen_cap);
        if o.screen_cap == Some(0) {
            checks.push("screen_cap must be at least 1");
        }
        o.sparsity = self.sparsity.or(file.sparsity);
        if let Some(s) = o.sparsity {
            if !(s > 0.0 && s <= 1.0) {
                checks.push(format!("sparsity must lie in (0, 1] (got {s})"));
            }
        }
        let rule = self.component_rule.as_deref().or(file.component_rule.as_deref());
        if let Some(r) = checks.parse::<ComponentRule>(rule, "component_rule") {
            o.component_rule = r;
        }
        o.max_components = self.max_components.or(file.max_components).unwrap_or(o.max_components);
        if o.max_components == 0 {
            checks.push("max_components must be at least 1");
        }
        o.sdr.nslices = self.nslices.or(file.nslices).unwrap_or(o.sdr.nslices);
        o.sdr.n_perm = self.n_perm.or(file.n_perm).unwrap_or(o.sdr.n_perm);
        o.sdr.alpha = self.alpha.or(file.alpha).unwrap_or(o.sdr.alpha);
        o.sdr.max_dim = self.max_dim.or(file.max_dim).unwrap_or(o.sdr.max_dim);
        o.sdr.phd_response_based = self.phd_response_based || file.phd_response_based.unwrap_or(false);
        if let Err(e) = o.sdr.validate() {
            checks.push(e.to_string());
        }
        o.ridge = self.ridge.or(file.ridge).unwrap_or(o.ridge);
        if !(o.ridge >= 0.0 && o.ridge.is_finite()) {
            checks.push(format!("ridge must be non-negative (got {})", o.ridge));
        }
        o.refit_per_draw = self.refit_per_draw || file.refit_per_draw.unwrap_or(false);
        o.forced = self.forced.clone().or_else(|| file.forced.clone()).unwrap_or_default();
        o
    }

    pub fn knn_k(&self, file: &FileConfig, checks: &mut Checks) -> usize {
        let k = self.knn_k.or(file.knn_k).unwrap_or(himpute::baselines::DEFAULT_K);
        if k == 0 {
            checks.push("knn_k must be at least 1");
        }
        k
    }
}
