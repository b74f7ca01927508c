//! Predictor transformation and collinearity screening.

mod transform;
mod vif;
mod yeo_johnson;

pub use transform::{apply_transform, fit_transform, FittedTransform};
pub use vif::{vif_screen, vifs, DEFAULT_VIF_THRESHOLD};
pub use yeo_johnson::{fit_lambda, log_likelihood, yeo_johnson, LAMBDA_RANGE};
