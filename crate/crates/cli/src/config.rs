use qmera_core::analysis::hash_hex;
use qmera_core::mera::MeraConfig;
use qmera_core::mitigation::DEFAULT_RESAMPLES;
use qmera_core::optimizer::OptConfig;
use qmera_core::simulator::NoiseModel;
use qmera_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const CONFIG_SCHEMA: &str = include_str!("../schemas/run_config.schema.json");

/// Separations measured when the config does not list them.
pub const DEFAULT_DISTANCES: [usize; 5] = [2, 4, 8, 16, 32];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub mera: MeraConfig,
    #[serde(default)]
    pub optimizer: OptConfig,
    /// Separations `r`; `None` picks the defaults that fit in half the chain.
    #[serde(default)]
    pub distances: Option<Vec<usize>>,
    /// First site of every pair; `None` means `7L/64`.
    #[serde(default)]
    pub j0: Option<usize>,
    /// Shots per distance, split between the two noise scales.
    #[serde(default = "shots")]
    pub shots: usize,
    #[serde(default = "zne_m")]
    pub zne_m: usize,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "resamples")]
    pub resamples: usize,
    #[serde(default = "min_distance")]
    pub min_distance: usize,
    #[serde(default = "reuse_cap")]
    pub reuse_cap: usize,
    #[serde(default = "mps_chis")]
    pub mps_chis: Vec<usize>,
    #[serde(default = "hist_bins")]
    pub hist_bins: usize,
    #[serde(default = "checkpoint_every")]
    pub checkpoint_every: usize,
}

fn schema_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}
fn shots() -> usize {
    8000
}
fn zne_m() -> usize {
    3
}
fn resamples() -> usize {
    DEFAULT_RESAMPLES
}
fn min_distance() -> usize {
    2
}
fn reuse_cap() -> usize {
    20
}
fn mps_chis() -> Vec<usize> {
    vec![16, 32, 64, 128]
}
fn hist_bins() -> usize {
    32
}
fn checkpoint_every() -> usize {
    50
}

impl RunConfig {
    pub fn new(mera: MeraConfig) -> Self {
        RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            mera,
            optimizer: OptConfig::default(),
            distances: None,
            j0: None,
            shots: shots(),
            zne_m: zne_m(),
            noise: NoiseModel::default(),
            seed: 0,
            resamples: resamples(),
            min_distance: min_distance(),
            reuse_cap: reuse_cap(),
            mps_chis: mps_chis(),
            hist_bins: hist_bins(),
            checkpoint_every: checkpoint_every(),
        }
    }

    /// Parses and validates a config document. Every unknown key is
    /// reported, not just the first.
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        let known = serde_json::to_value(RunConfig::new(MeraConfig::new(16, 2)))?;
        let mut unknown = Vec::new();
        unknown_keys(&v, &known, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        let cfg: RunConfig = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.mera.validate()?;
        self.optimizer.validate()?;
        self.noise.validate()?;
        let l = self.mera.l;
        let mut bad = Vec::new();
        if self.zne_m < 3 || self.zne_m % 2 == 0 {
            bad.push(format!("zne_m must be odd and >= 3, got {}", self.zne_m));
        }
        if self.shots < 4 {
            bad.push(format!("shots must be at least 4, got {}", self.shots));
        }
        if self.resamples < 2 {
            bad.push("resamples must be at least 2".into());
        }
        if self.reuse_cap < 2 {
            bad.push("reuse_cap must be at least 2".into());
        }
        if self.hist_bins == 0 || self.checkpoint_every == 0 {
            bad.push("hist_bins and checkpoint_every must be positive".into());
        }
        if self.mps_chis.iter().any(|&c| c == 0) {
            bad.push("mps_chis entries must be positive".into());
        }
        if let Some(j0) = self.j0 {
            if j0 >= l {
                bad.push(format!("j0 = {j0} is outside the chain of {l} sites"));
            }
        }
        let d = self.distances();
        if let Some(r) = d.iter().find(|&&r| r == 0 || r > l / 2) {
            bad.push(format!("distance {r} outside 1..={}", l / 2));
        }
        let mut sorted = d.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != d.len() {
            bad.push("distances must be distinct".into());
        }
        if d.iter().filter(|&&r| r >= self.min_distance).count() < 3 {
            bad.push(format!("need at least 3 distances >= min_distance = {}", self.min_distance));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    pub fn distances(&self) -> Vec<usize> {
        match &self.distances {
            Some(d) => d.clone(),
            None => DEFAULT_DISTANCES.iter().copied().filter(|&r| r <= self.mera.l / 2).collect(),
        }
    }

    pub fn j0(&self) -> usize {
        self.j0.unwrap_or(7 * self.mera.l / 64)
    }

    /// Sites `(j, k)` measured at separation `r`.
    pub fn pair(&self, r: usize) -> (usize, usize) {
        let l = self.mera.l;
        let j = self.j0() % l;
        (j, (j + r) % l)
    }

    pub fn placement(&self) -> String {
        format!("j = {}, k = j + r (mod {})", self.j0(), self.mera.l)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Hash of the whole resolved config.
    pub fn hash(&self) -> String {
        hash_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    /// Hash of the part that determines the optimized network.
    pub fn network_hash(&self) -> String {
        let part = serde_json::json!({ "mera": self.mera, "optimizer": self.optimizer });
        hash_hex(part.to_string().as_bytes())
    }
}

fn unknown_keys(v: &Value, known: &Value, prefix: &str, out: &mut Vec<String>) {
    let (Value::Object(vm), Value::Object(km)) = (v, known) else { return };
    for (k, sub) in vm {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match km.get(k) {
            None => out.push(path),
            Some(ks) => unknown_keys(sub, ks, &path, out),
        }
    }
}
