//! Interval type-2 neuro-fuzzy regression with explainable prediction
//! intervals.
//!
//! The pipeline is: [`dataset`] loads and scales a table, [`init`] places
//! rules by Latin-hypercube sampling, [`train`] fits consequents and
//! uncertain-mean bounds, [`inference`] produces interval predictions, and
//! [`explain`] reports feature-, rule- and instance-level uncertainty.
//! [`baselines`] builds the type-1 comparators on the same stack and
//! [`harness`] runs seeded rule-count sweeps.

// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod dataset;
pub mod explain;
pub mod harness;
pub mod inference;
pub mod init;
pub mod metrics;
pub mod model;
pub mod persist;
mod svg;
pub mod train;

pub use dataset::{Dataset, RawTable, Scaling, SyntheticSpec};
pub use inference::{
    fire, membership_bounds, predict_batch, predict_one, FiringStrengths, IntervalPrediction,
};
pub use init::InitConfig;
pub use metrics::MetricSet;
pub use model::{Antecedent, Consequent, Mode, Rule, RuleBase};
pub use persist::TrainedModel;
pub use train::{TrainConfig, TrainState};
