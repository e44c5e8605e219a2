//! Normal-form coefficients, homoclinic predictors and supporting numerics
//! for Bogdanov-Takens points of delay differential equations.

pub mod chmat;
pub mod cli;
pub mod ddesim;
pub mod error;
pub mod fit;
pub mod homological;
pub mod jet;
pub mod model;
pub mod models;
pub mod nf_generic;
pub mod nf_transcritical;
pub mod oracle_ode;
pub mod predictors;
pub mod spectral;

pub use error::{Error, Result};
