//! Causal discovery in stationary Markovian time series.
//!
//! A single realization is cut into non-overlapping windows of length
//! `2 tau + 1`; the parents of each component at the last time slice are then
//! found by conditional independence search, giving an unrolled DAG and its
//! rolled (summary) graph. The crate also carries the Granger and naive PC
//! comparators, the benchmark simulation models, evaluation metrics and a
//! spike-train preprocessing pipeline.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the `*F64`
//! aliases below name the usual double-precision instantiations.

pub mod baselines;
pub mod citest;
pub mod cits;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod linalg;
pub mod scalar;
pub mod series;
pub mod simgen;

pub use baselines::{gc1, gc2, pc_naive, VarModel};
pub use citest::{CiTestConfig, CiTestKind};
pub use cits::{
    cits_oracle, cits_sample, edge_weights_rolled, edge_weights_unrolled, CitsConfig, CitsResult,
};
pub use error::{Error, Result};
pub use eval::{confusion, metrics, run_grid, Confusion, ExperimentGrid, Method, Metrics};
pub use graph::{d_separated, roll, DSeparation, GraphJson, Node, RolledGraph, UnrolledDag};
pub use scalar::Real;
pub use series::{window, TimeSeries, WindowedSamples};
pub use simgen::{ground_truth, simulate, SimKind, SimModel};

pub type TimeSeriesF64 = TimeSeries<f64>;
pub type WindowedSamplesF64 = WindowedSamples<f64>;
pub type UnrolledDagF64 = UnrolledDag<f64>;
pub type RolledGraphF64 = RolledGraph<f64>;
pub type MatrixF64 = linalg::Matrix<f64>;
pub type CitsResultF64 = CitsResult<f64>;
pub type VarModelF64 = VarModel<f64>;
