//! Energy and gradient by descending reduced density matrices.
//!
//! Each Hamiltonian window (two adjacent finest-level bonds) needs the state
//! of its past causal cone. Cones of neighbouring windows overlap almost
//! entirely at coarse levels, so reduced states are computed per level on
//! windows of consecutive bonds and shared: a window at level `t` is obtained
//! from the smallest window at level `t+1` covering its cone by running the
//! gates of level `t` on a density matrix that takes fresh qubits in lazily
//! and traces departing qubits out as soon as their last cone gate is done.
//!
//! The gradient runs the same graph backwards, carrying the pulled-back
//! Hamiltonian (the adjoint of each channel) from the leaves to the root.

use std::collections::{BTreeMap, HashSet};

use super::dm::WireOp;
use super::gate::{dagger4, param_grads, Mat4, PARAMS_PER_GATE};
use super::hamiltonian::Term;
use super::network::{bond_wires, MeraNetwork, NetGate};
use crate::pauli::Pauli;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Trace(usize),
    Inject(usize),
    Gate(usize),
}

#[derive(Debug, Clone)]
struct Node {
    /// Window wires, in the order the stored state uses.
    wires: Vec<usize>,
    parent: Option<usize>,
    ops: Vec<Op>,
    /// Wire order produced by `ops` before the final reorder to `wires`.
    raw_order: Vec<usize>,
    /// Local Hamiltonian on `wires` for finest-level windows.
    ham: Option<WireOp>,
}

/// Precomputed evaluation graph for one network layout.
#[derive(Debug, Clone)]
pub struct EnergyEngine {
    nodes: Vec<Node>,
    /// Indices of `nodes` ordered root first.
    order: Vec<usize>,
    num_params: usize,
    peak_qubits: usize,
}

/// Smallest cyclic interval `(start, len)` of `0..n` covering `bonds`.
fn covering_interval(bonds: &[usize], n: usize) -> (usize, usize) {
    if bonds.is_empty() {
        return (0, 0);
    }
    let mut best = (usize::MAX, 0);
    for s in 0..n {
        let len = bonds.iter().map(|&b| (b + n - s) % n).max().unwrap() + 1;
        if len < best.0 {
            best = (len, s);
        }
    }
    if best.0 >= n {
        (0, n)
    } else {
        (best.1, best.0)
    }
}

fn pauli_matrix_on(wires: &[usize], terms: &[Term]) -> WireOp {
    let n = wires.len();
    let d = 1usize << n;
    let mut op = WireOp::zeros(wires.to_vec());
    for t in terms {
        for s in 0..d {
            let mut out = s;
            let mut phase = C64::new(t.coeff, 0.0);
            for &(site, p) in &t.ops {
                let k = wires.iter().position(|&w| w == site).expect("term outside window");
                let bp = n - 1 - k;
                let (nb, ph) = p.action((s >> bp) & 1);
                out = (out & !(1 << bp)) | (nb << bp);
                phase *= ph;
            }
            // column s maps to row out
            op.data[out * d + s] += phase;
        }
    }
    op
}

/// Orders the cone gates of one segment so that few wires are live at once.
///
/// Gates sharing a wire keep their circuit order; among the gates that are
/// ready, the one needing the fewest live wires wins, then the one leaving
/// the fewest behind, then the earliest.
fn schedule(cone: &[usize], gates: &[NetGate], live: &[usize], window: &HashSet<usize>) -> Vec<usize> {
    let mut per_wire: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &g in cone {
        let (a, b) = gates[g].wires;
        per_wire.entry(a).or_default().push(g);
        per_wire.entry(b).or_default().push(g);
    }
    let mut cursor: BTreeMap<usize, usize> = per_wire.keys().map(|&w| (w, 0)).collect();
    let mut live: HashSet<usize> = live.iter().copied().collect();
    let mut done: HashSet<usize> = HashSet::new();
    let mut out = Vec::with_capacity(cone.len());
    while out.len() < cone.len() {
        let mut best: Option<((usize, usize, usize), usize)> = None;
        for &g in cone {
            if done.contains(&g) {
                continue;
            }
            let (a, b) = gates[g].wires;
            let ready = [a, b].iter().all(|w| per_wire[w][cursor[w]] == g);
            if !ready {
                continue;
            }
            let inj = [a, b].iter().filter(|w| !live.contains(w)).count();
            let exits = [a, b]
                .iter()
                .filter(|w| cursor[w] + 1 == per_wire[w].len() && !window.contains(w))
                .count();
            let during = live.len() + inj;
            let key = (during, during - exits, g);
            if best.map_or(true, |(k, _)| key < k) {
                best = Some((key, g));
            }
        }
        let g = best.expect("cone gates form a DAG").1;
        let (a, b) = gates[g].wires;
        for w in [a, b] {
            live.insert(w);
            *cursor.get_mut(&w).unwrap() += 1;
            if cursor[&w] == per_wire[&w].len() && !window.contains(&w) {
                live.remove(&w);
            }
        }
        done.insert(g);
        out.push(g);
    }
    out
}

impl EnergyEngine {
    pub fn new(net: &MeraNetwork) -> Result<Self> {
        let cfg = net.config().clone();
        let l = cfg.l;
        let q = cfg.qubits_per_bond();
        let top = cfg.top_level();
        let gates = net.gates();

        // cut[t] = time right after level t is finished
        let mut cut = vec![0usize; top + 1];
        for (g, ng) in gates.iter().enumerate() {
            let lvl = net.blocks()[ng.block].level;
            cut[lvl] = cut[lvl].max(g + 1);
        }
        let mut first = vec![usize::MAX; l];
        for (g, ng) in gates.iter().enumerate() {
            for w in [ng.wires.0, ng.wires.1] {
                first[w] = first[w].min(g);
            }
        }
        // bond of each wire at each level
        let mut bond_of: Vec<Vec<Option<usize>>> = vec![vec![None; l]; top + 1];
        for (lvl, row) in bond_of.iter_mut().enumerate() {
            for b in 0..cfg.bonds_at(lvl) {
                for w in bond_wires(&cfg, lvl, b) {
                    row[w] = Some(b);
                }
            }
        }

        let mut nodes: Vec<Node> = Vec::new();
        let mut levels: Vec<usize> = Vec::new();
        let mut index: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
        nodes.push(Node { wires: Vec::new(), parent: None, ops: Vec::new(), raw_order: Vec::new(), ham: None });
        levels.push(top + 1);

        let b0 = cfg.bonds_at(0);
        let terms = super::hamiltonian::tfim_terms(l, cfg.j, cfg.h);
        for b in 0..b0 {
            let wires = [bond_wires(&cfg, 0, b), bond_wires(&cfg, 0, (b + 1) % b0)].concat();
            // XX(s, s+1) and Z(s) for the sites of bond b
            let mine: Vec<Term> = terms
                .iter()
                .filter(|t| {
                    let s0 = t.ops[0].0;
                    s0 / q == b
                })
                .cloned()
                .collect();
            let ham = pauli_matrix_on(&wires, &mine);
            index.insert((0, b, 2), nodes.len());
            nodes.push(Node { wires, parent: None, ops: Vec::new(), raw_order: Vec::new(), ham: Some(ham) });
            levels.push(0);
        }

        let mut frontier: Vec<usize> = (1..nodes.len()).collect();
        for lvl in 0..=top {
            let start = if lvl == top { 0 } else { cut[lvl + 1] };
            let end = cut[lvl];
            let mut next = Vec::new();
            for &id in &frontier {
                let wires = nodes[id].wires.clone();
                let mut needed: HashSet<usize> = wires.iter().copied().collect();
                let mut cone: Vec<(usize, ())> = Vec::new();
                for g in (start..end).rev() {
                    let (a, b) = gates[g].wires;
                    if needed.contains(&a) || needed.contains(&b) {
                        cone.push((g, ()));
                        needed.insert(a);
                        needed.insert(b);
                    }
                }
                cone.reverse();
                let mut required: Vec<usize> = needed.iter().copied().filter(|&w| first[w] < start).collect();
                required.sort_unstable();

                let parent = if lvl == top {
                    0
                } else {
                    let n = cfg.bonds_at(lvl + 1);
                    let mut bonds: Vec<usize> =
                        required.iter().map(|&w| bond_of[lvl + 1][w].expect("wire not alive")).collect();
                    bonds.sort_unstable();
                    bonds.dedup();
                    let (s, len) = covering_interval(&bonds, n);
                    *index.entry((lvl + 1, s, len)).or_insert_with(|| {
                        let wires: Vec<usize> =
                            (0..len).flat_map(|i| bond_wires(&cfg, lvl + 1, (s + i) % n)).collect();
                        nodes.push(Node { wires, parent: None, ops: Vec::new(), raw_order: Vec::new(), ham: None });
                        levels.push(lvl + 1);
                        next.push(nodes.len() - 1);
                        nodes.len() - 1
                    })
                };

                let mut remaining_uses: BTreeMap<usize, usize> = BTreeMap::new();
                for (g, _) in &cone {
                    let (a, b) = gates[*g].wires;
                    *remaining_uses.entry(a).or_default() += 1;
                    *remaining_uses.entry(b).or_default() += 1;
                }
                let mut ops = Vec::new();
                let mut live: Vec<usize> = nodes[parent].wires.clone();
                for &w in &nodes[parent].wires {
                    if !required.contains(&w) {
                        ops.push(Op::Trace(w));
                        live.retain(|&x| x != w);
                    }
                }
                let window: HashSet<usize> = wires.iter().copied().collect();
                let cone_gates: Vec<usize> = cone.iter().map(|c| c.0).collect();
                for g in schedule(&cone_gates, gates, &live, &window) {
                    let (a, b) = gates[g].wires;
                    for w in [a, b] {
                        if !live.contains(&w) {
                            ops.push(Op::Inject(w));
                            live.push(w);
                        }
                    }
                    ops.push(Op::Gate(g));
                    remaining_uses.entry(a).and_modify(|c| *c -= 1);
                    remaining_uses.entry(b).and_modify(|c| *c -= 1);
                    for w in [a, b] {
                        if remaining_uses[&w] == 0 && !window.contains(&w) {
                            ops.push(Op::Trace(w));
                            live.retain(|&x| x != w);
                        }
                    }
                }
                let node = &mut nodes[id];
                node.parent = Some(parent);
                node.ops = ops;
                node.raw_order = live;
            }
            frontier = next;
        }

        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(levels[i]), i));

        let mut engine = EnergyEngine { nodes, order, num_params: net.num_params(), peak_qubits: 0 };
        engine.peak_qubits = engine.simulate_widths();
        Ok(engine)
    }

    /// Sum of `4^live` over gate applications of one energy pass.
    pub fn cost_estimate(&self) -> f64 {
        let mut cost = 0.0;
        for node in &self.nodes {
            let Some(p) = node.parent else { continue };
            let mut n = self.nodes[p].wires.len() as i32;
            for op in &node.ops {
                match op {
                    Op::Trace(_) => n -= 1,
                    Op::Inject(_) => n += 1,
                    Op::Gate(_) => cost += 4f64.powi(n),
                }
            }
        }
        cost
    }

    fn simulate_widths(&self) -> usize {
        let mut peak = 0;
        for node in &self.nodes {
            let Some(p) = node.parent else { continue };
            let mut n = self.nodes[p].wires.len();
            peak = peak.max(n);
            for op in &node.ops {
                match op {
                    Op::Trace(_) => n -= 1,
                    Op::Inject(_) => {
                        n += 1;
                        peak = peak.max(n);
                    }
                    Op::Gate(_) => {}
                }
            }
        }
        peak
    }

    /// Most qubits held by any intermediate density matrix.
    pub fn peak_qubits(&self) -> usize {
        self.peak_qubits
    }

    pub fn num_windows(&self) -> usize {
        self.nodes.len() - 1
    }

    fn check(&self, net: &MeraNetwork) -> Result<()> {
        if net.num_params() != self.num_params {
            return Err(Error::InvalidInput("engine was built for a different layout".into()));
        }
        Ok(())
    }

    fn forward(&self, node: &Node, parent: &WireOp, us: &[Mat4], net: &MeraNetwork) -> WireOp {
        let mut rho = parent.clone();
        for op in &node.ops {
            match *op {
                Op::Trace(w) => rho = rho.trace_out(w),
                Op::Inject(w) => rho = rho.append_zero(w),
                Op::Gate(g) => {
                    let (a, b) = net.gates()[g].wires;
                    rho.conjugate_even(&us[g], a, b);
                }
            }
        }
        rho.reorder(&node.wires)
    }

    fn states(&self, net: &MeraNetwork, us: &[Mat4]) -> Vec<WireOp> {
        let mut rhos: Vec<Option<WireOp>> = vec![None; self.nodes.len()];
        rhos[0] = Some(WireOp::scalar(1.0));
        for &i in &self.order[1..] {
            let node = &self.nodes[i];
            let parent = rhos[node.parent.unwrap()].as_ref().unwrap();
            rhos[i] = Some(self.forward(node, parent, us, net));
        }
        rhos.into_iter().map(|r| r.unwrap()).collect()
    }

    pub fn energy(&self, net: &MeraNetwork) -> Result<f64> {
        self.check(net)?;
        let us = net.unitaries();
        let rhos = self.states(net, &us);
        Ok(self.sum_leaves(&rhos))
    }

    fn sum_leaves(&self, rhos: &[WireOp]) -> f64 {
        let mut e = 0.0;
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(h) = &node.ham {
                e += rhos[i].trace_product(h).re;
            }
        }
        e
    }

    /// Energy and its gradient with respect to every network parameter.
    pub fn energy_and_gradient(&self, net: &MeraNetwork) -> Result<(f64, Vec<f64>)> {
        self.check(net)?;
        let us = net.unitaries();
        let rhos = self.states(net, &us);
        let energy = self.sum_leaves(&rhos);
        let mut grad = vec![0.0; self.num_params];
        let mut adj: Vec<Option<WireOp>> =
            self.nodes.iter().map(|n| n.ham.clone()).collect();

        for &i in self.order[1..].iter().rev() {
            let node = &self.nodes[i];
            let Some(obar) = adj[i].take() else { continue };
            let p = node.parent.unwrap();
            let pulled = self.backward(node, &rhos[p], obar, &us, net, &mut grad);
            match &mut adj[p] {
                Some(a) => a.add_assign(&pulled),
                slot @ None => *slot = Some(pulled),
            }
        }
        Ok((energy, grad))
    }

    fn backward(
        &self,
        node: &Node,
        parent: &WireOp,
        obar: WireOp,
        us: &[Mat4],
        net: &MeraNetwork,
        grad: &mut [f64],
    ) -> WireOp {
        // forward again, keeping the states that traces destroy
        let mut rho = parent.clone();
        let mut saved: Vec<(usize, WireOp)> = Vec::new();
        for op in &node.ops {
            match *op {
                Op::Trace(w) => {
                    let k = rho.pos(w).unwrap();
                    let next = rho.trace_out(w);
                    saved.push((k, std::mem::replace(&mut rho, next)));
                }
                Op::Inject(w) => rho = rho.append_zero(w),
                Op::Gate(g) => {
                    let (a, b) = net.gates()[g].wires;
                    rho.conjugate_even(&us[g], a, b);
                }
            }
        }
        let mut o = obar.reorder(&node.raw_order);
        for op in node.ops.iter().rev() {
            match *op {
                Op::Trace(w) => {
                    let (k, before) = saved.pop().unwrap();
                    o = o.insert_identity(k, w);
                    rho = before;
                }
                Op::Inject(w) => {
                    o = o.project_zero(w);
                    rho = rho.project_zero(w);
                }
                Op::Gate(g) => {
                    let (a, b) = net.gates()[g].wires;
                    let ud = dagger4(&us[g]);
                    rho.conjugate_even(&ud, a, b);
                    o.conjugate_even(&ud, a, b);
                    let k = WireOp::reduce_pair_even(&rho, &o, a, b);
                    let off = net.gates()[g].param_offset;
                    let gs = param_grads(net.gate_slice(g), &k);
                    for s in 0..PARAMS_PER_GATE {
                        grad[off + s] += gs[s];
                    }
                }
            }
        }
        o
    }
}

/// Builds the dense matrix of a Pauli product on `wires`.
pub(crate) fn pauli_product_on(wires: &[usize], ops: &[(usize, Pauli)]) -> WireOp {
    pauli_matrix_on(wires, &[Term { coeff: 1.0, ops: ops.to_vec() }])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mera::{build_mera, random_params, statevector_energy, MeraConfig};

    #[test]
    fn interval_cover() {
        assert_eq!(covering_interval(&[0, 1], 8), (0, 2));
        assert_eq!(covering_interval(&[0, 7], 8), (7, 2));
        assert_eq!(covering_interval(&[0, 2, 4, 6], 8), (0, 7));
        assert_eq!(covering_interval(&[0, 1], 2), (0, 2));
    }

    #[test]
    fn energy_matches_statevector() {
        for (l, chi, drop) in [(8, 2, true), (8, 4, true), (16, 2, false), (16, 4, true), (16, 4, false)] {
            let mut cfg = MeraConfig::new(l, chi);
            cfg.drop_top_disentanglers = drop;
            cfg.h = 0.8;
            let p = random_params(&cfg, 1.0, l as u64 + chi as u64).unwrap();
            let net = build_mera(&cfg, p).unwrap();
            let eng = EnergyEngine::new(&net).unwrap();
            let a = eng.energy(&net).unwrap();
            let b = statevector_energy(&net).unwrap();
            assert!((a - b).abs() < 1e-10, "L={l} chi={chi}: {a} vs {b}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = MeraConfig::new(16, 4);
        let p = random_params(&cfg, 1.0, 3).unwrap();
        let net = build_mera(&cfg, p.clone()).unwrap();
        let eng = EnergyEngine::new(&net).unwrap();
        let (_, g) = eng.energy_and_gradient(&net).unwrap();
        for i in (0..p.len()).step_by(7) {
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[i] += 1e-5;
            pm[i] -= 1e-5;
            let fd = (eng.energy(&net.with_params(&pp).unwrap()).unwrap()
                - eng.energy(&net.with_params(&pm).unwrap()).unwrap())
                / 2e-5;
            assert!((fd - g[i]).abs() < 1e-7, "param {i}: {fd} vs {}", g[i]);
        }
    }
}
