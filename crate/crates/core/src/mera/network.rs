use serde::{Deserialize, Serialize};

use super::config::MeraConfig;
use super::gate::{gate_unitary, GateParams, Mat4, PARAMS_PER_GATE};
use crate::{Error, Result};

pub const LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Top,
    Isometry,
    Disentangler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    pub level: usize,
    /// Coarse bond for isometries, left bond for disentanglers.
    pub bond: usize,
    /// Block-local qubit -> wire.
    pub wires: Vec<usize>,
    /// Wires that enter this block in |0>.
    pub fresh: Vec<usize>,
    /// Indices into the network's flat gate list.
    pub gates: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetGate {
    pub block: usize,
    pub local: (usize, usize),
    pub wires: (usize, usize),
    pub param_offset: usize,
}

/// A qMERA circuit. Gates are stored in circuit-time order (top of the
/// network first); every wire is named after the output site it ends on and
/// starts in |0> right before its first gate.
#[derive(Debug, Clone, PartialEq)]
pub struct MeraNetwork {
    config: MeraConfig,
    params: Vec<f64>,
    blocks: Vec<Block>,
    gates: Vec<NetGate>,
}

/// Output site reached by qubit `pos` of bond `bond` at `level`.
///
/// Isometries place the coarse qubits in the inner block slots (chi = 4) or
/// the left slot (chi = 2); fresh qubits take the remaining slots.
pub fn wire_of(chi: usize, level: usize, bond: usize, pos: usize) -> usize {
    if level == 0 {
        return bond * (chi / 2).max(1) + pos;
    }
    match (chi, pos) {
        (4, 0) => wire_of(chi, level - 1, 2 * bond, 1),
        (4, _) => wire_of(chi, level - 1, 2 * bond + 1, 0),
        _ => wire_of(chi, level - 1, 2 * bond, 0),
    }
}

fn brick(n: usize) -> &'static [(usize, usize)] {
    if n == 4 {
        &[(0, 1), (2, 3), (1, 2)]
    } else {
        &[(0, 1)]
    }
}

struct Layout {
    blocks: Vec<Block>,
    gates: Vec<NetGate>,
}

fn layout(cfg: &MeraConfig) -> Layout {
    let chi = cfg.chi;
    let q = cfg.qubits_per_bond();
    let top = cfg.top_level();
    let w = |level, bond, pos| wire_of(chi, level, bond, pos);
    let bond_wires = |level: usize, bond: usize| -> Vec<usize> { (0..q).map(|p| w(level, bond, p)).collect() };

    let mut blocks = Vec::new();
    let mut gates = Vec::new();
    let mut push = |kind, level, bond, wires: Vec<usize>, fresh: Vec<usize>| {
        let b = blocks.len();
        let mut ids = Vec::new();
        for &(x, y) in brick(wires.len()) {
            ids.push(gates.len());
            gates.push(NetGate {
                block: b,
                local: (x, y),
                wires: (wires[x], wires[y]),
                param_offset: gates.len() * PARAMS_PER_GATE,
            });
        }
        blocks.push(Block { kind, level, bond, wires, fresh, gates: ids });
    };

    let top_wires: Vec<usize> = [bond_wires(top, 0), bond_wires(top, 1)].concat();
    push(BlockKind::Top, top, 0, top_wires.clone(), top_wires);
    for level in (0..top).rev() {
        let n = cfg.bonds_at(level);
        for i in 0..n / 2 {
            let wires = [bond_wires(level, 2 * i), bond_wires(level, 2 * i + 1)].concat();
            let fresh = if q == 2 { vec![wires[0], wires[3]] } else { vec![wires[1]] };
            push(BlockKind::Isometry, level, i, wires, fresh);
        }
        if level + 1 == top && cfg.drop_top_disentanglers {
            continue;
        }
        for i in 0..n / 2 {
            let (a, b) = (2 * i + 1, (2 * i + 2) % n);
            let wires = [bond_wires(level, a), bond_wires(level, b)].concat();
            push(BlockKind::Disentangler, level, a, wires, Vec::new());
        }
    }
    Layout { blocks, gates }
}

/// Wires of `bond` at `level`, in bond-qubit order.
pub fn bond_wires(cfg: &MeraConfig, level: usize, bond: usize) -> Vec<usize> {
    (0..cfg.qubits_per_bond()).map(|p| wire_of(cfg.chi, level, bond, p)).collect()
}

/// Number of angles of the network described by `cfg`.
pub fn param_count(cfg: &MeraConfig) -> Result<usize> {
    cfg.validate()?;
    Ok(layout(cfg).gates.len() * PARAMS_PER_GATE)
}

pub fn build_mera(config: &MeraConfig, params: Vec<f64>) -> Result<MeraNetwork> {
    config.validate()?;
    let Layout { blocks, gates } = layout(config);
    let want = gates.len() * PARAMS_PER_GATE;
    if params.len() != want {
        return Err(Error::InvalidInput(format!(
            "network needs {want} parameters, got {}",
            params.len()
        )));
    }
    Ok(MeraNetwork { config: config.clone(), params, blocks, gates })
}

impl MeraNetwork {
    pub fn config(&self) -> &MeraConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::InvalidInput(format!(
                "network needs {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn with_params(&self, params: &[f64]) -> Result<MeraNetwork> {
        let mut n = self.clone();
        n.set_params(params)?;
        Ok(n)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn gates(&self) -> &[NetGate] {
        &self.gates
    }

    pub fn num_sites(&self) -> usize {
        self.config.l
    }

    pub fn gate_params(&self, g: usize) -> GateParams {
        let o = self.gates[g].param_offset;
        GateParams::from_slice(&self.params[o..o + PARAMS_PER_GATE])
    }

    pub fn gate_slice(&self, g: usize) -> &[f64] {
        let o = self.gates[g].param_offset;
        &self.params[o..o + PARAMS_PER_GATE]
    }

    pub fn gate_matrix(&self, g: usize) -> Mat4 {
        gate_unitary(&self.gate_params(g))
    }

    /// Per-gate unitaries in circuit order.
    pub fn unitaries(&self) -> Vec<Mat4> {
        (0..self.gates.len()).map(|g| self.gate_matrix(g)).collect()
    }

    /// Flat parameter positions holding XX / YY angles.
    pub fn entangler_param_positions(&self) -> Vec<usize> {
        self.gates.iter().flat_map(|g| [g.param_offset + 2, g.param_offset + 3]).collect()
    }

    pub fn param_index(&self) -> Vec<ParamEntry> {
        self.gates
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let b = &self.blocks[g.block];
                ParamEntry {
                    offset: g.param_offset,
                    gate: i,
                    block: g.block,
                    kind: b.kind,
                    level: b.level,
                    bond: b.bond,
                    local: [g.local.0, g.local.1],
                    wires: [g.wires.0, g.wires.1],
                }
            })
            .collect()
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            layout_version: LAYOUT_VERSION,
            config: self.config.clone(),
            param_fields: FIELD_NAMES.iter().map(|s| s.to_string()).collect(),
            param_index: self.param_index(),
            blocks: self.blocks.clone(),
            params: self.params.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<MeraNetwork> {
        let doc: NetworkDocument = serde_json::from_str(s)?;
        MeraNetwork::from_document(doc)
    }

    pub fn from_document(doc: NetworkDocument) -> Result<MeraNetwork> {
        if doc.layout_version != LAYOUT_VERSION {
            return Err(Error::InvalidInput(format!(
                "layout version {} not supported (expected {LAYOUT_VERSION})",
                doc.layout_version
            )));
        }
        let net = build_mera(&doc.config, doc.params)?;
        if net.param_index() != doc.param_index || net.blocks != doc.blocks {
            return Err(Error::InvalidInput("stored layout does not match this build".into()));
        }
        Ok(net)
    }
}

pub const FIELD_NAMES: [&str; PARAMS_PER_GATE] =
    ["pre_z0", "pre_z1", "theta_xx", "alpha_yy", "post_z0", "post_z1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub offset: usize,
    pub gate: usize,
    pub block: usize,
    pub kind: BlockKind,
    pub level: usize,
    pub bond: usize,
    pub local: [usize; 2],
    pub wires: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub layout_version: u32,
    pub config: MeraConfig,
    pub param_fields: Vec<String>,
    pub param_index: Vec<ParamEntry>,
    pub blocks: Vec<Block>,
    pub params: Vec<f64>,
}
