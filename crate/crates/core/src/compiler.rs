//! Qubit reuse: reorder a circuit so wires are measured early, then reset
//! measured qubits and hand them to later injections.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::circuits::{Circuit, Op};
use crate::simulator::{self, run_noiseless};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReuseMode {
    None,
    Greedy,
    Cap(usize),
}

/// One logical wire living on a physical qubit between two positions of the
/// compiled op list (`to` is the measurement, `None` if never measured).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tenancy {
    pub wire: usize,
    pub physical: usize,
    pub from: usize,
    pub to: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledCircuit {
    pub circuit: Circuit,
    pub width: usize,
    pub mode: ReuseMode,
    pub tenancies: Vec<Tenancy>,
}

impl CompiledCircuit {
    /// Tenancies of each logical wire, indexed by wire.
    pub fn mapping(&self) -> BTreeMap<usize, Vec<Tenancy>> {
        let mut m: BTreeMap<usize, Vec<Tenancy>> = BTreeMap::new();
        for t in &self.tenancies {
            m.entry(t.wire).or_default().push(*t);
        }
        m
    }
}

struct Dag {
    preds: Vec<Vec<usize>>,
    meas: Vec<usize>,
}

fn build_dag(c: &Circuit) -> Dag {
    let mut last: Vec<Option<usize>> = vec![None; c.num_qubits];
    let mut preds = Vec::with_capacity(c.ops.len());
    let mut meas = Vec::new();
    for (i, op) in c.ops.iter().enumerate() {
        let mut p = Vec::new();
        for q in op.qubits() {
            if let Some(j) = last[q] {
                if !p.contains(&j) {
                    p.push(j);
                }
            }
            last[q] = Some(i);
        }
        preds.push(p);
        if matches!(op, Op::MeasZ { .. }) {
            meas.push(i);
        }
    }
    Dag { preds, meas }
}

#[derive(Clone)]
struct State {
    scheduled: Vec<bool>,
    order: Vec<usize>,
    /// physical qubit of each logical wire while it is live
    phys: Vec<Option<usize>>,
    done: Vec<bool>,
    free: VecDeque<usize>,
    nphys: usize,
    /// `(position in order, wire, physical, reused)` at each activation
    activations: Vec<(usize, usize, usize, bool)>,
    cap: Option<usize>,
}

impl State {
    fn new(c: &Circuit, cap: Option<usize>) -> Self {
        State {
            scheduled: vec![false; c.ops.len()],
            order: Vec::with_capacity(c.ops.len()),
            phys: vec![None; c.num_qubits],
            done: vec![false; c.num_qubits],
            free: VecDeque::new(),
            nphys: 0,
            activations: Vec::new(),
            cap,
        }
    }

    fn activates(&self, c: &Circuit, i: usize) -> usize {
        c.ops[i].qubits().iter().filter(|&&w| self.phys[w].is_none()).count()
    }

    fn place(&mut self, c: &Circuit, i: usize) {
        for w in c.ops[i].qubits() {
            if self.phys[w].is_some() {
                continue;
            }
            debug_assert!(!self.done[w], "wire {w} used after its measurement");
            // widen up to the cap before recycling, which keeps wires apart in time
            let widen = self.cap.is_some_and(|cap| self.nphys < cap);
            let (p, reused) = match (widen, self.free.pop_front()) {
                (false, Some(p)) => (p, true),
                (true, Some(p)) => {
                    self.free.push_front(p);
                    self.nphys += 1;
                    (self.nphys - 1, false)
                }
                (_, None) => {
                    self.nphys += 1;
                    (self.nphys - 1, false)
                }
            };
            self.phys[w] = Some(p);
            self.activations.push((self.order.len(), w, p, reused));
        }
        self.scheduled[i] = true;
        self.order.push(i);
        if let Op::MeasZ { q, .. } = c.ops[i] {
            let p = self.phys[q].take().expect("measured wire is live");
            self.done[q] = true;
            self.free.push_back(p);
        }
    }

    fn ready(&self, dag: &Dag, i: usize) -> bool {
        !self.scheduled[i] && dag.preds[i].iter().all(|&p| self.scheduled[p])
    }

    /// Unscheduled ancestors of `m` (inclusive), ascending.
    fn past(&self, dag: &Dag, m: usize) -> Vec<usize> {
        let mut seen = vec![m];
        let mut stack = vec![m];
        while let Some(x) = stack.pop() {
            for &p in &dag.preds[x] {
                if !self.scheduled[p] && !seen.contains(&p) {
                    seen.push(p);
                    stack.push(p);
                }
            }
        }
        seen.sort_unstable();
        seen
    }

    fn new_wires(&self, c: &Circuit, ops: &[usize]) -> usize {
        let mut ws: Vec<usize> = ops
            .iter()
            .flat_map(|&i| c.ops[i].qubits())
            .filter(|&w| self.phys[w].is_none() && !self.done[w])
            .collect();
        ws.sort_unstable();
        ws.dedup();
        ws.len()
    }

    /// Schedules the past cone of the measurement chosen by the greedy rule:
    /// fewest new wire activations, then earliest op, then lowest wire.
    fn greedy_step(&mut self, c: &Circuit, dag: &Dag) -> bool {
        let mut best: Option<((usize, usize, usize), Vec<usize>)> = None;
        for &m in &dag.meas {
            if self.scheduled[m] {
                continue;
            }
            let cone = self.past(dag, m);
            let key = (self.new_wires(c, &cone), m, c.ops[m].qubits()[0]);
            if best.as_ref().is_none_or(|(k, _)| key < *k) {
                best = Some((key, cone));
            }
        }
        match best {
            Some((_, cone)) => {
                for i in cone {
                    self.place(c, i);
                }
                true
            }
            None => false,
        }
    }

    fn finish_greedy(&mut self, c: &Circuit, dag: &Dag) {
        while self.greedy_step(c, dag) {}
        for i in 0..c.ops.len() {
            if !self.scheduled[i] {
                self.place(c, i);
            }
        }
    }
}

fn greedy_completion_width(state: &State, c: &Circuit, dag: &Dag) -> usize {
    let mut s = state.clone();
    s.cap = None;
    s.finish_greedy(c, dag);
    s.nphys
}

fn emit(c: &Circuit, s: &State, mode: ReuseMode) -> CompiledCircuit {
    let mut out = Circuit::new(s.nphys);
    out.cbits = c.cbits.clone();
    let mut cur: Vec<Option<usize>> = vec![None; c.num_qubits];
    let mut acts = s.activations.iter().peekable();
    let mut tenancies: Vec<Tenancy> = Vec::new();
    let mut open: Vec<Option<usize>> = vec![None; c.num_qubits];
    for (pos, &i) in s.order.iter().enumerate() {
        while let Some(&&(p, w, ph, reused)) = acts.peek() {
            if p != pos {
                break;
            }
            acts.next();
            if reused {
                out.push(Op::Reset { q: ph });
            }
            cur[w] = Some(ph);
            open[w] = Some(tenancies.len());
            tenancies.push(Tenancy { wire: w, physical: ph, from: out.ops.len(), to: None });
        }
        let op = c.ops[i].with_qubits(|w| cur[w].expect("wire mapped"));
        out.push(op);
        if let Op::MeasZ { q, .. } = c.ops[i] {
            if let Some(t) = open[q].take() {
                tenancies[t].to = Some(out.ops.len() - 1);
            }
        }
    }
    for (&site, &w) in &c.outputs {
        if let Some(p) = cur[w] {
            out.outputs.insert(site, p);
        }
    }
    CompiledCircuit { circuit: out, width: s.nphys, mode, tenancies }
}

/// Qubit-reuse compilation.
pub fn reuse_compile(c: &Circuit, mode: ReuseMode) -> Result<CompiledCircuit> {
    c.validate()?;
    if c.ops.iter().any(|o| matches!(o, Op::Reset { .. })) {
        return Err(Error::InvalidInput("input circuit already contains resets".into()));
    }
    let dag = build_dag(c);
    match mode {
        ReuseMode::None => {
            let tenancies = (0..c.num_qubits)
                .filter_map(|w| {
                    let from = c.ops.iter().position(|o| o.qubits().contains(&w))?;
                    let to = c.ops.iter().position(|o| matches!(o, Op::MeasZ { q, .. } if *q == w));
                    Some(Tenancy { wire: w, physical: w, from, to })
                })
                .collect();
            Ok(CompiledCircuit { circuit: c.clone(), width: c.num_qubits, mode, tenancies })
        }
        ReuseMode::Greedy => {
            let mut s = State::new(c, None);
            s.finish_greedy(c, &dag);
            Ok(emit(c, &s, mode))
        }
        ReuseMode::Cap(w) => {
            let min = greedy_completion_width(&State::new(c, None), c, &dag);
            if w < min {
                return Err(Error::InvalidInput(format!("cap {w} is below the greedy minimum width {min}")));
            }
            let mut s = State::new(c, Some(w));
            while s.order.len() < c.ops.len() {
                let mut progressed = false;
                for i in 0..c.ops.len() {
                    if !s.ready(&dag, i) {
                        continue;
                    }
                    let need = s.activates(c, i);
                    if need > 0 {
                        let mut t = s.clone();
                        t.place(c, i);
                        if t.nphys > w || greedy_completion_width(&t, c, &dag) > w {
                            continue;
                        }
                        s = t;
                    } else {
                        s.place(c, i);
                    }
                    progressed = true;
                }
                if !progressed && !s.greedy_step(c, &dag) {
                    for i in 0..c.ops.len() {
                        if !s.scheduled[i] {
                            s.place(c, i);
                        }
                    }
                }
            }
            if s.nphys > w {
                return Err(Error::Numerical(format!("cap schedule used {} qubits, cap {w}", s.nphys)));
            }
            Ok(emit(c, &s, mode))
        }
    }
}

/// Longest chain of two-qubit gates through the op dependency graph.
pub fn depth2q(c: &Circuit) -> usize {
    let mut level = vec![0usize; c.num_qubits];
    let mut depth = 0;
    for op in &c.ops {
        if op.is_two_qubit() {
            let qs = op.qubits();
            let l = qs.iter().map(|&q| level[q]).max().unwrap_or(0) + 1;
            for q in qs {
                level[q] = l;
            }
            depth = depth.max(l);
        }
    }
    depth
}

/// Largest number of physical qubits holding a live wire at once.
pub fn active_width(c: &CompiledCircuit) -> usize {
    let mut events: Vec<(usize, i64)> = Vec::new();
    for t in &c.tenancies {
        events.push((t.from, 1));
        events.push((t.to.map_or(usize::MAX, |x| x + 1), -1));
    }
    events.sort_unstable_by_key(|&(p, d)| (p, d));
    let (mut cur, mut peak) = (0i64, 0i64);
    for (_, d) in events {
        cur += d;
        peak = peak.max(cur);
    }
    peak as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Equivalence {
    Equal { tv: f64 },
    Different { tv: f64 },
    Invalid { reason: String },
    Skipped { reason: String },
}

impl Equivalence {
    pub fn is_equal(&self) -> bool {
        matches!(self, Equivalence::Equal { .. })
    }
}

pub const EQUIVALENCE_MAX_QUBITS: usize = 14;

/// Compares exact noiseless outcome distributions of both circuits.
pub fn simulate_equivalence_check(original: &Circuit, compiled: &CompiledCircuit) -> Equivalence {
    let wide = original.num_qubits.max(compiled.circuit.num_qubits);
    if wide > EQUIVALENCE_MAX_QUBITS {
        return Equivalence::Skipped {
            reason: format!("{wide} qubits exceed the {EQUIVALENCE_MAX_QUBITS}-qubit dense check"),
        };
    }
    let a = match run_noiseless(original) {
        Ok(d) => d,
        Err(e) => return Equivalence::Invalid { reason: format!("original: {e}") },
    };
    let b = match run_noiseless(&compiled.circuit) {
        Ok(d) => d,
        Err(e) => return Equivalence::Invalid { reason: format!("compiled: {e}") },
    };
    let tv = total_variation(&a, &b);
    if tv < 1e-9 {
        Equivalence::Equal { tv }
    } else {
        Equivalence::Different { tv }
    }
}

pub fn total_variation(a: &BTreeMap<Vec<u8>, f64>, b: &BTreeMap<Vec<u8>, f64>) -> f64 {
    let mut tv = 0.0;
    for (k, pa) in a {
        tv += (pa - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, pb) in b {
        if !a.contains_key(k) {
            tv += pb;
        }
    }
    0.5 * tv
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceStats {
    pub distance: usize,
    pub two_qubit_gates: usize,
    pub width_no_reuse: usize,
    pub width_greedy: usize,
    pub width_cap: usize,
    pub depth_no_reuse: usize,
    pub depth_greedy: usize,
    pub depth_cap: usize,
    pub cap: usize,
}

/// Widths and two-qubit depths of the three compilation modes. If the cap
/// is below the greedy minimum the cap columns repeat the greedy ones.
pub fn resource_stats(c: &Circuit, distance: usize, cap: usize) -> Result<ResourceStats> {
    let none = reuse_compile(c, ReuseMode::None)?;
    let greedy = reuse_compile(c, ReuseMode::Greedy)?;
    let capped = reuse_compile(c, ReuseMode::Cap(cap.max(greedy.width)))?;
    Ok(ResourceStats {
        distance,
        two_qubit_gates: c.two_qubit_count(),
        width_no_reuse: none.width,
        width_greedy: greedy.width,
        width_cap: capped.width,
        depth_no_reuse: depth2q(&none.circuit),
        depth_greedy: depth2q(&greedy.circuit),
        depth_cap: depth2q(&capped.circuit),
        cap,
    })
}

/// The resource table as CSV.
pub fn resource_csv(rows: &[ResourceStats]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let cap = rows.first().map_or(20, |r| r.cap);
    w.write_record([
        "distance".to_string(),
        "two_qubit_gates".into(),
        "width_no_reuse".into(),
        "width_greedy".into(),
        format!("width_cap{cap}"),
        "depth_no_reuse".into(),
        "depth_greedy".into(),
        format!("depth_cap{cap}"),
    ])?;
    for r in rows {
        w.write_record(
            [r.distance, r.two_qubit_gates, r.width_no_reuse, r.width_greedy, r.width_cap, r.depth_no_reuse, r.depth_greedy, r.depth_cap]
                .map(|v| v.to_string()),
        )?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("ascii"))
}

/// Compiles for simulation: the smallest of greedy and the cap that fits
/// under the dense limit.
pub fn compile_for_simulation(c: &Circuit, cap: usize) -> Result<CompiledCircuit> {
    if c.num_qubits <= cap.min(simulator::DENSE_LIMIT) {
        return reuse_compile(c, ReuseMode::None);
    }
    let greedy = reuse_compile(c, ReuseMode::Greedy)?;
    if greedy.width >= cap {
        return Ok(greedy);
    }
    reuse_compile(c, ReuseMode::Cap(cap))
}
