use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::network::MeraNetwork;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeEvent {
    /// Position in the cone's gate list: injections happen right before it,
    /// exits right after it.
    pub step: usize,
    pub wire: usize,
}

/// Past causal cone of a set of output sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalCone {
    pub sites: Vec<usize>,
    /// Network gate indices in circuit order.
    pub gates: Vec<usize>,
    /// Every wire the cone touches, ascending.
    pub wires: Vec<usize>,
    pub injections: Vec<ConeEvent>,
    pub exits: Vec<ConeEvent>,
}

impl CausalCone {
    pub fn width(&self) -> usize {
        self.wires.len()
    }

    /// Largest number of wires alive at once.
    pub fn peak_live(&self) -> usize {
        let mut live: i64 = 0;
        let mut peak = 0;
        let (mut i, mut e) = (0, 0);
        for step in 0..self.gates.len() {
            while i < self.injections.len() && self.injections[i].step == step {
                live += 1;
                i += 1;
            }
            peak = peak.max(live);
            while e < self.exits.len() && self.exits[e].step == step {
                live -= 1;
                e += 1;
            }
        }
        peak as usize
    }
}

/// Gates with a directed path to any of `sites`, found by a backward sweep
/// that keeps the set of wires still needed.
pub fn causal_cone(net: &MeraNetwork, sites: &[usize]) -> Result<CausalCone> {
    if sites.is_empty() {
        return Err(Error::InvalidInput("causal cone of an empty site set".into()));
    }
    let l = net.num_sites();
    if let Some(&s) = sites.iter().find(|&&s| s >= l) {
        return Err(Error::InvalidInput(format!("site {s} outside 0..{l}")));
    }
    let sites: Vec<usize> = sites.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut needed = vec![false; l];
    for &s in &sites {
        needed[s] = true;
    }
    let mut gates = Vec::new();
    for (g, ng) in net.gates().iter().enumerate().rev() {
        let (a, b) = ng.wires;
        if needed[a] || needed[b] {
            needed[a] = true;
            needed[b] = true;
            gates.push(g);
        }
    }
    gates.reverse();

    let mut first = vec![usize::MAX; l];
    let mut last = vec![usize::MAX; l];
    for (step, &g) in gates.iter().enumerate() {
        let (a, b) = net.gates()[g].wires;
        for w in [a, b] {
            if first[w] == usize::MAX {
                first[w] = step;
            }
            last[w] = step;
        }
    }
    let wires: Vec<usize> = (0..l).filter(|&w| first[w] != usize::MAX).collect();
    let mut injections: Vec<ConeEvent> = wires.iter().map(|&w| ConeEvent { step: first[w], wire: w }).collect();
    let mut exits: Vec<ConeEvent> = wires
        .iter()
        .filter(|w| sites.binary_search(w).is_err())
        .map(|&w| ConeEvent { step: last[w], wire: w })
        .collect();
    injections.sort_by_key(|e| (e.step, e.wire));
    exits.sort_by_key(|e| (e.step, e.wire));
    Ok(CausalCone { sites, gates, wires, injections, exits })
}
