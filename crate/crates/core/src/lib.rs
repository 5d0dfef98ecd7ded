//! Shapley-value attributions for black-box models.
//!
//! * [`coalition`]: masks, layers and Shapley-kernel weights
//! * [`value`]: coalition value functions over a model and background data,
//!   or a synthetic game
//! * [`sampling`]: the Kernel SHAP and ST-SHAP coalition samplers
//! * [`wls`]: the constrained weighted least-squares surrogate fit
//! * [`layer1`]: closed-form attributions from the layer-1 coalitions
//! * [`exact`]: exhaustive Shapley values
//! * [`metrics`]: Jaccard stability, adherence, Kendall tau and R²

pub mod coalition;
pub mod error;
pub mod exact;
pub mod layer1;
pub mod metrics;
pub mod sampling;
pub mod value;
pub mod wls;

pub use coalition::{
    complete_layer_budgets, enumerate_layer, kernel_weight, layer_size, Coalition, KernelWeight, LayerIndex,
};
pub use error::{Error, Result};
pub use exact::{exact_shap, exact_shap_permutation, ExactValues};
pub use layer1::{alt_form, layer1_attribution, Layer1Intermediates};
pub use metrics::{adherence, jaccard_n, kendall_tau, r2_score, Task};
pub use sampling::{materialize, plan_kernel_shap, plan_st_shap, Budget, SamplingPlan, Strategy, WeightedCoalitionSet};
pub use value::{BackgroundSet, CoalitionValue, Instance, MarginalValue, Model, SyntheticGame};
pub use wls::{explain, fit, sparsify, Explanation, Method};
