//! The metastatic colorectal cancer example shipped with the crate.

use std::fmt;
use std::str::FromStr;

use crate::data::{parse_dataset, MetaDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Pfs,
    Os,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Trials reporting every population enter through the mixed estimate.
    Main,
    /// Those trials enter through their subgroup estimates instead.
    Sensitivity,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pfs => "PFS",
            Outcome::Os => "OS",
        })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Main => "main",
            Variant::Sensitivity => "sensitivity",
        })
    }
}

impl FromStr for Outcome {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pfs" => Ok(Outcome::Pfs),
            "os" => Ok(Outcome::Os),
            _ => Err(format!("unknown outcome `{s}` (expected pfs or os)")),
        }
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "main" => Ok(Variant::Main),
            "sens" | "sensitivity" => Ok(Variant::Sensitivity),
            _ => Err(format!("unknown variant `{s}` (expected main or sensitivity)")),
        }
    }
}

pub fn bundled_csv(outcome: Outcome, variant: Variant) -> &'static str {
    match (outcome, variant) {
        (Outcome::Os, Variant::Main) => include_str!("../../../data/mcrc_os_main.csv"),
        (Outcome::Os, Variant::Sensitivity) => include_str!("../../../data/mcrc_os_sens.csv"),
        (Outcome::Pfs, Variant::Main) => include_str!("../../../data/mcrc_pfs_main.csv"),
        (Outcome::Pfs, Variant::Sensitivity) => include_str!("../../../data/mcrc_pfs_sens.csv"),
    }
}

pub fn bundled(outcome: Outcome, variant: Variant) -> MetaDataset {
    parse_dataset(bundled_csv(outcome, variant)).expect("bundled datasets are valid")
}
