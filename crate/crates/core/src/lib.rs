//! Influence diagrams over semi-Markov processes: embedded-chain revision,
//! forward/Gibbs/composite sampling, and the infection and toxicity models.

pub mod cli;
pub mod diagram;
pub mod distribution;
pub mod emc;
pub mod error;
pub mod model_file;
pub mod models;
pub mod sampler;

pub use diagram::{
    conditional_density, joint_density, markov_blanket, topological_order, validate_diagram, Configuration, DiagramSpec,
    Domain, Evidence, InfluenceDiagram, ValidationReport, Value, VariableId, Violation,
};
pub use distribution::{Coefficients, Distribution};
pub use emc::{extract_emc, global_revise, Emc, Revision};
pub use error::{Error, Result};
pub use model_file::{load_model, ModelFile};
pub use sampler::{
    composite_sample, forward_sample, gibbs_local_conditional, gibbs_sweep, kernel_estimate, mixture_estimate, query,
    Acceptance, Estimator, PosteriorTable, QueryReport, Retain, SampleSet, Sampler, SamplerConfig, ScanOrder,
};
