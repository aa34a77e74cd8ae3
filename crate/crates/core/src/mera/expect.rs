//! Local expectation values of the network output.

use std::collections::BTreeSet;

use super::cone::causal_cone;
use super::dm::WireOp;
use super::engine::pauli_product_on;
use super::network::MeraNetwork;
use crate::pauli::{Pauli, PauliString};
use crate::tensors::{Network, Tensor};
use crate::{Error, Result, C64};

/// Largest observable support accepted by [`expect_local`].
pub const MAX_OBS_SITES: usize = 4;

fn check_obs(net: &MeraNetwork, obs: &PauliString) -> Result<()> {
    if obs.is_empty() {
        return Err(Error::InvalidInput("observable has no support".into()));
    }
    if obs.len() > MAX_OBS_SITES {
        return Err(Error::InvalidInput(format!(
            "observable acts on {} sites, at most {MAX_OBS_SITES} supported",
            obs.len()
        )));
    }
    if let Some(s) = obs.sites().into_iter().find(|&s| s >= net.num_sites()) {
        return Err(Error::InvalidInput(format!("site {s} outside the chain")));
    }
    Ok(())
}

/// Reverse order in which [`expect_pauli`] visits the cone gates. Greedy,
/// mirroring qubit reuse: repeatedly pick the wire start (a gate that is
/// the first on one of its wires) whose unvisited future pulls in the
/// fewest new wires, visit that future latest-first, then the start itself
/// so the wire can be projected out.
fn pullback_order(net: &MeraNetwork, ops: &[(usize, Pauli)]) -> Vec<usize> {
    let l = net.num_sites();
    let gates = net.gates();
    let mut live = vec![false; l];
    for &(s, p) in ops {
        live[s] |= p != Pauli::I;
    }
    let mut in_cone = vec![false; gates.len()];
    for (g, ng) in gates.iter().enumerate().rev() {
        let (a, b) = ng.wires;
        if live[a] || live[b] {
            in_cone[g] = true;
            live[a] = true;
            live[b] = true;
        }
    }
    let cone: Vec<usize> = (0..gates.len()).filter(|&g| in_cone[g]).collect();
    let mut first = vec![usize::MAX; l];
    let mut next: Vec<[Option<usize>; 2]> = vec![[None; 2]; gates.len()];
    let mut last: Vec<Option<usize>> = vec![None; l];
    for &g in &cone {
        let (a, b) = gates[g].wires;
        for w in [a, b] {
            first[w] = first[w].min(g);
            if let Some(h) = last[w] {
                let slot = if gates[h].wires.0 == w { 0 } else { 1 };
                next[h][slot] = Some(g);
            }
            last[w] = Some(g);
        }
    }
    let starts: Vec<usize> =
        cone.iter().copied().filter(|&g| first[gates[g].wires.0] == g || first[gates[g].wires.1] == g).collect();
    let mut done = vec![false; gates.len()];
    let mut held = vec![false; l];
    for &(s, p) in ops {
        held[s] |= p != Pauli::I;
    }
    let mut order = Vec::with_capacity(cone.len());
    loop {
        let mut best: Option<((usize, usize), Vec<usize>)> = None;
        for &g in starts.iter().filter(|&&g| !done[g]) {
            let mut fut = vec![g];
            let mut seen = std::collections::BTreeSet::from([g]);
            let mut i = 0;
            while i < fut.len() {
                for h in next[fut[i]].into_iter().flatten() {
                    if !done[h] && seen.insert(h) {
                        fut.push(h);
                    }
                }
                i += 1;
            }
            let mut new_wires = BTreeSet::new();
            for &h in &fut {
                let (a, b) = gates[h].wires;
                for w in [a, b] {
                    if !held[w] {
                        new_wires.insert(w);
                    }
                }
            }
            let key = (new_wires.len(), usize::MAX - g);
            if best.as_ref().is_none_or(|(k, _)| key < *k) {
                best = Some((key, seen.into_iter().collect()));
            }
        }
        let Some((_, fut)) = best else { break };
        for &h in fut.iter().rev() {
            let (a, b) = gates[h].wires;
            done[h] = true;
            order.push(h);
            for w in [a, b] {
                held[w] = first[w] != h;
            }
        }
    }
    order
}

/// `<psi| O |psi>` for a Pauli product, pulling `O` back through its causal
/// cone gate by gate. The operator is kept as a product of factors on
/// disjoint wire sets that only merge when a gate straddles two of them, so
/// distant sites cost little until their cones meet.
pub fn expect_pauli(net: &MeraNetwork, ops: &[(usize, Pauli)]) -> Result<f64> {
    let l = net.num_sites();
    let gates = net.gates();
    let mut first = vec![usize::MAX; l];
    for (g, ng) in gates.iter().enumerate() {
        for w in [ng.wires.0, ng.wires.1] {
            first[w] = first[w].min(g);
        }
    }
    let mut factors: Vec<WireOp> = ops
        .iter()
        .filter(|(_, p)| *p != Pauli::I)
        .map(|&(s, p)| pauli_product_on(&[s], &[(s, p)]))
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; l];
    for (i, f) in factors.iter().enumerate() {
        owner[f.wires[0]] = Some(i);
    }
    let mut scalar = C64::new(1.0, 0.0);
    for g in pullback_order(net, ops) {
        let ng = &gates[g];
        let (a, b) = ng.wires;
        let f = match (owner[a], owner[b]) {
            (None, None) => continue,
            (Some(x), Some(y)) if x == y => x,
            (Some(x), Some(y)) => {
                let fy = std::mem::replace(&mut factors[y], WireOp::scalar(1.0));
                let merged = factors[x].kron(&fy);
                for &w in &fy.wires {
                    owner[w] = Some(x);
                }
                factors[x] = merged;
                x
            }
            (Some(x), None) | (None, Some(x)) => {
                let other = if owner[a].is_some() { b } else { a };
                let n = factors[x].n();
                factors[x] = factors[x].insert_identity(n, other);
                owner[other] = Some(x);
                x
            }
        };
        factors[f].pull_back(&net.gate_matrix(g), a, b);
        for w in [a, b] {
            if first[w] == g {
                factors[f] = factors[f].project_zero(w);
                owner[w] = None;
            }
        }
        if factors[f].n() == 0 {
            scalar *= factors[f].data[0];
            factors[f] = WireOp::scalar(1.0);
        }
    }
    for f in &factors {
        scalar *= f.data[0];
    }
    Ok(scalar.re)
}

/// `<psi| O |psi>` for a Pauli string on at most four sites.
pub fn expect_local(net: &MeraNetwork, obs: &PauliString) -> Result<f64> {
    check_obs(net, obs)?;
    expect_pauli(net, &obs.iter().collect::<Vec<_>>())
}

/// Same value by contracting the cone circuit with its conjugate as a tensor
/// network under a greedy pairwise plan.
pub fn expect_local_tn(net: &MeraNetwork, obs: &PauliString) -> Result<f64> {
    check_obs(net, obs)?;
    let sites = obs.sites();
    let cone = causal_cone(net, &sites)?;
    let c = |re: f64| C64::new(re, 0.0);
    let mut tn = Network::new();
    let mut next_label = 0usize;
    let mut fresh = || {
        next_label += 1;
        next_label - 1
    };
    // current open ket/bra labels of every cone wire
    let mut ket = vec![usize::MAX; net.num_sites()];
    let mut bra = vec![usize::MAX; net.num_sites()];
    let zero = Tensor::new(vec![2], vec![c(1.0), c(0.0)])?;
    for &w in &cone.wires {
        ket[w] = fresh();
        bra[w] = fresh();
        tn.push(zero.clone(), vec![ket[w]])?;
        tn.push(zero.clone(), vec![bra[w]])?;
    }
    for &g in &cone.gates {
        let (a, b) = net.gates()[g].wires;
        let u = net.gate_matrix(g);
        let data: Vec<C64> = u.iter().flatten().copied().collect();
        let t = Tensor::new(vec![2, 2, 2, 2], data)?;
        let (ka, kb) = (fresh(), fresh());
        tn.push(t.clone(), vec![ka, kb, ket[a], ket[b]])?;
        ket[a] = ka;
        ket[b] = kb;
        let (ba, bb) = (fresh(), fresh());
        tn.push(t.conj(), vec![ba, bb, bra[a], bra[b]])?;
        bra[a] = ba;
        bra[b] = bb;
    }
    let site_set: BTreeSet<usize> = sites.iter().copied().collect();
    for &w in &cone.wires {
        let m = if site_set.contains(&w) {
            obs.iter().find(|(s, _)| *s == w).unwrap().1.matrix()
        } else {
            Pauli::I.matrix()
        };
        // <bra| M |ket>: M[bra_out, ket_out]
        tn.push(Tensor::new(vec![2, 2], m.to_vec())?, vec![bra[w], ket[w]])?;
    }
    let plan = tn.plan_greedy()?;
    let v = tn.contract(&plan, &[])?.as_scalar().unwrap();
    Ok(v.re)
}

/// `<X_j X_k>`; equals the connected correlator because `<X_j> = 0`.
pub fn correlator_xx(net: &MeraNetwork, j: usize, k: usize) -> Result<f64> {
    if j == k {
        return Ok(1.0);
    }
    expect_pauli(net, &[(j, Pauli::X), (k, Pauli::X)])
}
