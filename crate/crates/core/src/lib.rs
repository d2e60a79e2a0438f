//! Benchmark arena for black-box optimization over fully enumerated
//! categorical parameter spaces.

pub mod aggregate;
pub mod analytics;
pub mod campaign;
pub mod complexity;
pub mod dataset;
pub mod forest;
pub mod llm;
pub mod optimizer;
pub mod space;

pub use aggregate::{aggregate_group, weighted_selectivity, AggregationMode, AggregationPolicy, Measurement};
pub use dataset::{BenchmarkDataset, DatasetError};
pub use space::{Assignment, Goal, ObjectiveSpec, Parameter, ParameterSpace, SpaceError};
