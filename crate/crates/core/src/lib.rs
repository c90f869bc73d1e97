//! Strategic measures for finite controlled Markov models.
//!
//! The crate covers model validation, policy classes and their induced
//! measures on histories, membership checks for measure classes, cost and
//! risk criteria, minimax games with partial information, policy
//! enumeration and partially observed models.

pub mod chain;
pub mod criteria;
pub mod error;
pub mod game;
pub mod model;
pub mod measure;
pub mod minimax;
pub mod optimize;
pub mod policy;
pub mod pomdp;
pub mod prob;

pub use error::{Error, Result};
pub use model::{CriterionKind, CriterionSpec, FiniteMdp, FinitePomdp, MinimaxModel, PsiFn};
pub use measure::{MeasureClass, StrategicMeasure};
pub use policy::{Policy, PolicyClass};
pub use prob::Prob;
