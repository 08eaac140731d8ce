//! Parameter layout and forward-only network evaluation. No autodiff.

pub mod mlp;
pub mod params;
pub mod spec;
pub mod transformer;

pub use mlp::mlp_forward;
pub use params::{flatten, init_params, unflatten, FlatParams, PolicyView};
pub use spec::{layout, param_count, Architecture, DtSpec, PolicySpec, TensorSpec};
pub use transformer::{causal_self_attention, transformer_forward, transformer_forward_last};
