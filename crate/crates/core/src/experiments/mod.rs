//! Cost models, figure data, benchmarks and the configuration format used
//! by the command-line front end.

pub mod bench;
pub mod config;
pub mod cost;
pub mod figures;

use thiserror::Error;

use crate::gtest::GtError;
use crate::simnet::SimError;

pub use config::ConfigMap;
pub use cost::{cost_checksum, cost_recagt, cost_uncoded, CostParams, SchemeCost};
pub use figures::{fig4_data, fig5_data, simulation_table, CsvTable, Fig4Grid, Fig5Options};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Gt(#[from] GtError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Code(#[from] crate::codes::CodeError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One row of the committee settings table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Setting {
    pub id: u8,
    /// Number of committees in the system.
    pub committees: usize,
    pub n: usize,
    pub f: usize,
    pub m: usize,
}

pub const TABLE2: [Setting; 4] = [
    Setting {
        id: 1,
        committees: 300,
        n: 6,
        f: 1,
        m: 2,
    },
    Setting {
        id: 2,
        committees: 70,
        n: 24,
        f: 3,
        m: 3,
    },
    Setting {
        id: 3,
        committees: 25,
        n: 72,
        f: 4,
        m: 8,
    },
    Setting {
        id: 4,
        committees: 4,
        n: 450,
        f: 5,
        m: 10,
    },
];

pub fn setting(id: u8) -> Option<Setting> {
    TABLE2.iter().copied().find(|s| s.id == id)
}
