//! File IO, experiment orchestration and the `subnetsim` command line on top
//! of `subnet-core`.

pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod output;
pub mod trace;
pub mod training;
