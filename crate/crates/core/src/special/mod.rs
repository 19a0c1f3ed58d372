//! Deterministic analytic ingredients: `Gamma`, `rho_theta`, `C_eps`,
//! Wirsing mean-value predictions, smooth-sum ratios and prime cosine sums.

pub mod gamma;
pub mod quad;
pub mod rho;
pub mod smooth;
pub mod wirsing;

pub use gamma::{gamma, ln_gamma};
pub use quad::integrate;
pub use rho::{c_epsilon, c_epsilon_deficit, RhoTable, DEFAULT_STEP, RHO_T_CAP};
pub use smooth::{prime_cosine_sum, smooth_ratio_prediction, smooth_sum_check};
pub use wirsing::{c_g, l_g, sieved_mean, wirsing_prediction};
