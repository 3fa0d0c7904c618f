use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, DenseNet, PlateauSchedule};
use crate::error::{Error, Result};

/// Self-describing JSON container for a network plus its training state.
///
/// `f64` values are written with shortest round-trip formatting, so a
/// save/load cycle reproduces every parameter and running statistic
/// bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub net: DenseNet,
    pub optimizer: Option<AdamState>,
    pub schedule: Option<PlateauSchedule>,
    /// Seeds that produced this model, outermost first.
    pub seed_lineage: Vec<u64>,
}

impl Checkpoint {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(net: DenseNet, seed_lineage: Vec<u64>) -> Self {
        Checkpoint {
            format_version: Self::FORMAT_VERSION,
            net,
            optimizer: None,
            schedule: None,
            seed_lineage,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if !self.net.params_finite() {
            return Err(Error::non_finite("checkpoint parameters"));
        }
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&json)?;
        if ckpt.format_version != Self::FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint format version {}",
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }
}
