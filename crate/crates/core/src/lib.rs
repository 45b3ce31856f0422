//! Trace-driven simulator of an intermittently powered SRAM / STT-RAM / PCM
//! memory hierarchy whose L1 bounds its dirty blocks so that a fixed
//! capacitor can always back them up.

pub mod addr;
pub mod baseline;
pub mod config;
pub mod dbt;
pub mod engine;
pub mod l1;
pub mod lower;
pub mod oracle;
pub mod policy;
pub mod report;
pub mod stats;
pub mod sweep;
pub mod synth;
pub mod trace;
pub mod types;
pub mod wbq;

pub use baseline::BaselineId;
pub use config::{derive_k, HierarchyConfig};
pub use engine::{run, run_records, Fault, PowerSchedule, SimError, Simulator};
pub use oracle::{check_consistency, oracle_run, MemoryImage};
pub use stats::SimStats;
pub use types::{AccessKind, AccessRecord};
