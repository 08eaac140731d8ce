//! OpenAI-style evolution strategy: shared noise table, mirrored sampling,
//! centered-rank shaping, natural-gradient estimate, optimizer step with
//! decoupled weight decay, and observation statistics for VBN.

pub mod conditioned;
pub mod gradient;
pub mod noise;
pub mod optim;
pub mod seeds;
pub mod shaping;
pub mod state;
pub mod vbn;

pub use conditioned::{rtg_fitness, sample_desired_return};
pub use gradient::{gradient_estimate, gradient_estimate_batched};
pub use noise::{perturb, sample_offsets, NoiseTable, Perturbation};
pub use optim::{decay_weights, OptimizerConfig, OptimizerKind, OptimizerState};
pub use shaping::centered_ranks;
pub use state::{
    evaluate_slice, plan_generation, run_generation_local, EsSettings, EsState, EvalJob,
    Evaluation, Evaluator, GenerationPlan, GenerationReport, GenerationSummary, ReportEntry,
    UpdatePlan,
};
pub use vbn::VbnStats;
