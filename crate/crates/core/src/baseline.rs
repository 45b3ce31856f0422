//! Canned architectures for comparison runs. All share a 256KB 16-way
//! STT-RAM LLC and PCM main memory; only the proposed one has the dirty
//! block controller and backup region.

use std::fmt;
use std::str::FromStr;

use crate::config::{HierarchyConfig, WritePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaselineId {
    /// 32KB write-through L1.
    Baseline1,
    /// 32KB write-back L1.
    Baseline2,
    /// 4KB write-back L1.
    Baseline3,
    /// 32KB L1 with DBT, WBQ and backup region.
    Proposed,
}

impl BaselineId {
    pub const ALL: [BaselineId; 4] = [
        BaselineId::Baseline1,
        BaselineId::Baseline2,
        BaselineId::Baseline3,
        BaselineId::Proposed,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BaselineId::Baseline1 => "baseline-1",
            BaselineId::Baseline2 => "baseline-2",
            BaselineId::Baseline3 => "baseline-3",
            BaselineId::Proposed => "proposed",
        }
    }

    pub fn config(self) -> HierarchyConfig {
        let mut c = HierarchyConfig {
            l1_size_bytes: 32 * 1024,
            llc_size_bytes: 256 * 1024,
            ..HierarchyConfig::default()
        };
        match self {
            BaselineId::Baseline1 => {
                c.write_policy = WritePolicy::WriteThrough;
                c.dbt_enabled = false;
                c.br_enabled = false;
            }
            BaselineId::Baseline2 => {
                c.dbt_enabled = false;
                c.br_enabled = false;
            }
            BaselineId::Baseline3 => {
                c.l1_size_bytes = 4 * 1024;
                c.dbt_enabled = false;
                c.br_enabled = false;
            }
            BaselineId::Proposed => {}
        }
        c
    }
}

impl fmt::Display for BaselineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for BaselineId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "baseline-1" | "baseline1" | "b1" => Ok(BaselineId::Baseline1),
            "baseline-2" | "baseline2" | "b2" => Ok(BaselineId::Baseline2),
            "baseline-3" | "baseline3" | "b3" => Ok(BaselineId::Baseline3),
            "proposed" => Ok(BaselineId::Proposed),
            _ => Err(format!("unknown architecture {s:?} (baseline-1, baseline-2, baseline-3, proposed)")),
        }
    }
}
