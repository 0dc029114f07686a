//! Data-mixture scaling laws: fit laws to training runs, predict loss for unseen budgets and
//! mixtures, and find the domain weights that minimize predicted loss.

pub mod error;
pub mod fitkit;
pub mod laws;
pub mod mixopt;
pub mod mixture;
pub mod rng;
pub mod runstore;
pub mod synthlab;

pub use error::{Error, Result};
pub use laws::{Family, FamilyParams, LawParams};
pub use mixture::{Dataset, MixtureVector, RunRecord, TargetWeights};
