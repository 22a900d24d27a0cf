//! Monotone operators of the layer-wise variational inequality, their
//! modulus estimates, and the projected update rules.

mod operator;
mod step;

pub use operator::{
    estimate_modulus, hidden_layer_operator, last_layer_grams, last_layer_operator, layer_operators,
    modulus_from_trace, ModulusEstimate, OperatorEstimate,
};
pub use step::{
    adaptive_step, oe_select_index, oe_select_iterate, oe_step, project, vi_step, vi_step_with_momentum,
    Momentum, ParamDomain,
};
