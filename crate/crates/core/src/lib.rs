//! Construction of before-fix / after-fix bug datasets from a Git
//! repository and issue-tracker data, plus the evaluation harness used to
//! validate them.

pub mod analysis;
pub mod dataset;
pub mod diff;
pub mod eval;
pub mod filter;
pub mod git;
pub mod ingest;
pub mod java;
pub mod linker;
pub mod metrics;
pub mod pipeline;
pub mod stats;
