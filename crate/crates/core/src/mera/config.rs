use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn default_true() -> bool {
    true
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeraConfig {
    #[serde(rename = "L")]
    pub l: usize,
    pub chi: usize,
    #[serde(default = "default_true")]
    pub drop_top_disentanglers: bool,
    #[serde(rename = "J", default = "default_one")]
    pub j: f64,
    #[serde(default = "default_one")]
    pub h: f64,
}

impl MeraConfig {
    pub fn new(l: usize, chi: usize) -> Self {
        Self { l, chi, drop_top_disentanglers: true, j: 1.0, h: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.l.is_power_of_two() || self.l < 8 {
            return Err(Error::Config(format!("L must be a power of two >= 8, got {}", self.l)));
        }
        if self.chi != 2 && self.chi != 4 {
            return Err(Error::Config(format!("chi must be 2 or 4, got {}", self.chi)));
        }
        if !self.j.is_finite() || !self.h.is_finite() {
            return Err(Error::Config("couplings must be finite".into()));
        }
        Ok(())
    }

    /// Qubits carried by one bond, `log2 chi`.
    pub fn qubits_per_bond(&self) -> usize {
        self.chi.trailing_zeros() as usize
    }

    /// Bonds at the finest level.
    pub fn num_bonds(&self) -> usize {
        self.l / self.qubits_per_bond()
    }

    /// Index of the coarsest level; it holds two bonds.
    pub fn top_level(&self) -> usize {
        self.num_bonds().trailing_zeros() as usize - 1
    }

    pub fn bonds_at(&self, level: usize) -> usize {
        self.num_bonds() >> level
    }
}
