//! Dominance estimation between entity classes: decide which of two classes
//! has more real-world instances from noisy count signals.
//!
//! Signals come from a knowledge base, search snippets and a language model,
//! for whole classes ("root") and for country subgroups. They are combined
//! by subgroup majority and t-test votes, a per-source weighted score, and a
//! cross-source majority or logistic-regression vote.

pub mod aggregate;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod quantity;
pub mod report;
pub mod sources;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    negate_prediction, validate_table, AggregationParams, CardinalitySignal, ClassSpec, Domain, Prediction, Scope,
    SignalTable, Source, SourceSignals, Subgroup, SubgroupScheme,
};
