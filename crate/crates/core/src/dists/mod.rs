//! Output and latent distributions, plus the baseline reference models.

mod baseline;
pub mod dmol;
pub mod gaussian;

pub use baseline::{baseline_fit_dmol, baseline_uniform, FitOptions, FittedBaseline};
pub use dmol::{dmol_log_lik, dmol_log_prob, dmol_sample, DMoLParams, DEFAULT_COMPONENTS, LOG_SCALE_MIN};
pub use gaussian::{
    gaussian_kl, gaussian_kl_var, gaussian_log_lik, gaussian_log_prob, max_gaussian_ll, reparam_sample, reparam_var,
    GaussianParams, DEFAULT_VAR_FLOOR,
};
