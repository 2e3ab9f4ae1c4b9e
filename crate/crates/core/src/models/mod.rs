//! The infection and toxicity models, and the enumeration oracle.

pub mod enumeration;
pub mod infection;
pub mod toxicity;

pub use enumeration::{enumeration_oracle, ExactPosterior};
pub use infection::{build_infection_model, infection_posterior_oracle, tobs_density, InfectionParams};
pub use toxicity::{
    build_toxicity_model, learn_alpha_posterior, predict_survival, survival_prob, AlphaBelief, History, ToxicityParams,
};
