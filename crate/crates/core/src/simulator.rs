//! Statevector execution of circuits with mid-circuit measurement and reset,
//! shot sampling, and the angle-dependent gate noise model.
//!
//! Only qubits between their first use and their measurement are kept in
//! the amplitude vector. A measured qubit is a classical bit and drops out;
//! it comes back as `|b>` (or `|0>` after a reset) when touched again. The
//! vector therefore tracks the live width of the circuit, not its qubit
//! count.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::circuits::{Cbit, Circuit, Op, OpMatrix, Role};
use crate::dense;
use crate::mera::gate::Mat4;
use crate::pauli::Pauli;
use crate::{Error, Result, C64};

pub const DENSE_LIMIT: usize = 24;

/// Branch cap for exact outcome enumeration.
pub const MAX_BRANCHES: usize = 1 << 18;

/// Two-qubit gate error grows linearly with the entangling angle.
/// `p0 + slope * a / (pi/2)` is the average infidelity of a gate with
/// effective angle `a`, where `a` is the angle wrapped into `[0, pi/2]`
/// (an angle beyond `pi/2` differs from its complement by local Paulis).
/// For a uniform two-qubit Pauli channel with total error probability `p`
/// the average infidelity is `r = p d/(d+1)` with `d = 4`, so `p = 5r/4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub p0: f64,
    pub slope: f64,
    /// Phase-flip probability per qubit per time unit.
    pub idle_dephase_rate: f64,
    pub scale: f64,
}

/// Time units a two-qubit gate occupies.
pub const TWO_QUBIT_DURATION: f64 = 2.0;

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { p0: 1e-4, slope: 1.9e-3, idle_dephase_rate: 1e-4 / 20.0, scale: 1.0 }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel { scale: 0.0, ..Default::default() }
    }

    pub fn scaled(&self, scale: f64) -> Self {
        NoiseModel { scale, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.p0, self.slope, self.idle_dephase_rate, self.scale];
        if fields.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("noise parameters must be finite and non-negative".into()));
        }
        let worst = self.pauli_prob(PI / 2.0);
        if worst > 1.0 {
            return Err(Error::Config(format!("scaled gate error probability {worst} exceeds 1")));
        }
        if self.scale * self.idle_dephase_rate > 0.5 {
            return Err(Error::Config("scaled dephasing rate exceeds 1/2 per time unit".into()));
        }
        Ok(())
    }

    pub fn effective_angle(theta: f64) -> f64 {
        let a = theta.rem_euclid(PI);
        a.min(PI - a)
    }

    /// Scaled average infidelity of a two-qubit gate.
    pub fn infidelity(&self, theta: f64) -> f64 {
        self.scale * (self.p0 + self.slope * Self::effective_angle(theta) / (PI / 2.0))
    }

    /// Probability that one of the 15 non-identity Pauli pairs follows the gate.
    pub fn pauli_prob(&self, theta: f64) -> f64 {
        1.25 * self.infidelity(theta)
    }

    /// Phase-flip probability after idling `dt` time units.
    pub fn idle_prob(&self, dt: f64) -> f64 {
        let q = self.scale * self.idle_dephase_rate;
        if dt <= 0.0 || q == 0.0 {
            return 0.0;
        }
        -0.5 * (dt * (-2.0 * q).ln_1p()).exp_m1()
    }
}

/// As-soon-as-possible start times; two-qubit gates last
/// [`TWO_QUBIT_DURATION`], everything else is instantaneous.
pub fn schedule(c: &Circuit) -> Vec<f64> {
    let mut avail = vec![0.0f64; c.num_qubits];
    c.ops
        .iter()
        .map(|op| {
            let qs = op.qubits();
            let t = qs.iter().map(|&q| avail[q]).fold(0.0, f64::max);
            let end = if op.is_two_qubit() { t + TWO_QUBIT_DURATION } else { t };
            for q in qs {
                avail[q] = end;
            }
            t
        })
        .collect()
}

/// Amplitudes over the currently attached qubits. `slot[q]` is the bit
/// position of qubit `q`; detached qubits hold a classical value.
#[derive(Clone, Debug)]
struct LiveState {
    amps: Vec<C64>,
    slot: Vec<Option<u32>>,
    value: Vec<u8>,
    order: Vec<usize>,
}

impl LiveState {
    fn new(n: usize) -> Self {
        LiveState { amps: vec![C64::new(1.0, 0.0)], slot: vec![None; n], value: vec![0; n], order: Vec::new() }
    }

    fn attach(&mut self, q: usize) -> usize {
        if let Some(s) = self.slot[q] {
            return 1 << s;
        }
        let s = self.order.len();
        let len = self.amps.len();
        let zero = C64::new(0.0, 0.0);
        if self.value[q] == 0 {
            self.amps.resize(2 * len, zero);
        } else {
            let mut v = vec![zero; len];
            v.extend_from_slice(&self.amps);
            self.amps = v;
        }
        self.slot[q] = Some(s as u32);
        self.order.push(q);
        1 << s
    }

    /// Probability that qubit `q` reads 1.
    fn prob_one(&self, q: usize) -> f64 {
        match self.slot[q] {
            None => self.value[q] as f64,
            Some(s) => {
                let m = 1usize << s;
                self.amps.iter().enumerate().filter(|(i, _)| i & m != 0).map(|(_, a)| a.norm_sqr()).sum()
            }
        }
    }

    /// Projects `q` onto `b`, renormalises by `prob`, and detaches it.
    fn collapse(&mut self, q: usize, b: u8, prob: f64) {
        let Some(s) = self.slot[q] else {
            self.value[q] = b;
            return;
        };
        let s = s as usize;
        let low = (1usize << s) - 1;
        let norm = 1.0 / prob.sqrt();
        let half = self.amps.len() / 2;
        let mut out = Vec::with_capacity(half);
        for i in 0..half {
            let src = (i & low) | ((i & !low) << 1) | ((b as usize) << s);
            out.push(self.amps[src] * norm);
        }
        self.amps = out;
        self.slot[q] = None;
        self.value[q] = b;
        self.order.remove(s);
        for (k, &w) in self.order.iter().enumerate().skip(s) {
            self.slot[w] = Some(k as u32);
        }
    }

    fn apply1(&mut self, q: usize, u: &[C64; 4]) {
        let m = self.attach(q);
        for i in 0..self.amps.len() {
            if i & m != 0 {
                continue;
            }
            let (x, y) = (self.amps[i], self.amps[i | m]);
            self.amps[i] = u[0] * x + u[1] * y;
            self.amps[i | m] = u[2] * x + u[3] * y;
        }
    }

    fn apply2(&mut self, a: usize, b: usize, u: &Mat4) {
        let ma = self.attach(a);
        let mb = self.attach(b);
        for i in 0..self.amps.len() {
            if i & (ma | mb) != 0 {
                continue;
            }
            let idx = [i, i | mb, i | ma, i | ma | mb];
            let v = [self.amps[idx[0]], self.amps[idx[1]], self.amps[idx[2]], self.amps[idx[3]]];
            for (r, &k) in idx.iter().enumerate() {
                self.amps[k] = u[r][0] * v[0] + u[r][1] * v[1] + u[r][2] * v[2] + u[r][3] * v[3];
            }
        }
    }

    fn pauli(&mut self, q: usize, p: Pauli) {
        if p == Pauli::I {
            return;
        }
        if self.slot[q].is_none() && p == Pauli::Z {
            return;
        }
        self.apply1(q, &p.matrix());
    }

    fn apply_op_unitary(&mut self, op: &Op) {
        match op.matrix() {
            Some(OpMatrix::One(q, u)) => self.apply1(q, &u),
            Some(OpMatrix::Two(a, b, u)) => self.apply2(a, b, &u),
            None => unreachable!(),
        }
    }

    fn norm_sqr(&self) -> f64 {
        dense::norm_sqr(&self.amps)
    }
}

fn check_width(c: &Circuit) -> Result<()> {
    if c.num_qubits > DENSE_LIMIT {
        return Err(Error::TooWide { width: c.num_qubits, limit: DENSE_LIMIT });
    }
    c.validate()
}

/// State of all `num_qubits` qubits after the unitary ops, skipping
/// measurements (deferred measurement). Circuits with resets are rejected.
pub fn final_state(c: &Circuit) -> Result<Vec<C64>> {
    if c.num_qubits > DENSE_LIMIT {
        return Err(Error::TooWide { width: c.num_qubits, limit: DENSE_LIMIT });
    }
    if c.ops.iter().any(|o| matches!(o, Op::Reset { .. })) {
        return Err(Error::InvalidInput("final_state needs a reset-free circuit".into()));
    }
    let n = c.num_qubits;
    let mut psi = dense::zero_state(n);
    for op in &c.ops {
        match op.matrix() {
            Some(OpMatrix::One(q, u)) => dense::apply_1q(&mut psi, n, q, &u),
            Some(OpMatrix::Two(a, b, u)) => dense::apply_2q(&mut psi, n, a, b, &u),
            None => {}
        }
    }
    Ok(psi)
}

/// Exact joint distribution of all classical bits, keyed by the bit string
/// in classical-bit order.
pub fn run_noiseless(c: &Circuit) -> Result<BTreeMap<Vec<u8>, f64>> {
    check_width(c)?;
    let nb = c.cbits.len();
    let mut branches: Vec<(f64, LiveState, Vec<u8>)> = vec![(1.0, LiveState::new(c.num_qubits), vec![0; nb])];
    for op in &c.ops {
        match *op {
            Op::MeasZ { q, .. } | Op::Reset { q } => {
                let cbit = match *op {
                    Op::MeasZ { cbit, .. } => Some(cbit),
                    _ => None,
                };
                let mut next = Vec::with_capacity(branches.len());
                for (w, st, bits) in branches {
                    let p1 = st.prob_one(q).clamp(0.0, 1.0);
                    for (b, p) in [(0u8, 1.0 - p1), (1u8, p1)] {
                        if p <= 1e-300 {
                            continue;
                        }
                        let mut s2 = st.clone();
                        s2.collapse(q, b, p);
                        let mut bits2 = bits.clone();
                        match cbit {
                            Some(cb) => bits2[cb] = b,
                            None => s2.value[q] = 0,
                        }
                        next.push((w * p, s2, bits2));
                    }
                }
                branches = next;
                if branches.len() > MAX_BRANCHES {
                    return Err(Error::Numerical(format!(
                        "exact enumeration needs more than {MAX_BRANCHES} outcome branches"
                    )));
                }
            }
            _ => {
                for (_, st, _) in branches.iter_mut() {
                    st.apply_op_unitary(op);
                }
            }
        }
    }
    let mut dist: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    for (w, _, bits) in branches {
        *dist.entry(bits).or_insert(0.0) += w;
    }
    Ok(dist)
}

/// Per-shot classical records of one circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotTable {
    pub meta: ShotMeta,
    pub columns: Vec<Cbit>,
    #[serde(skip)]
    pub shots: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotMeta {
    pub circuit_id: String,
    pub noise: NoiseModel,
    pub noise_scale: f64,
    pub seed: u64,
    pub shots: usize,
    /// Gate folding factor applied to the circuit (1 when unfolded).
    #[serde(default = "one")]
    pub fold: usize,
}

fn one() -> usize {
    1
}

/// Stable identifier of a circuit: first 16 hex digits of the SHA-256 of
/// its JSON-lines form.
pub fn circuit_id(c: &Circuit) -> Result<String> {
    let digest = Sha256::digest(c.to_jsonl()?.as_bytes());
    Ok(hex::encode(&digest[..8]))
}

impl ShotTable {
    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    pub fn columns_with(&self, role: Role) -> Vec<usize> {
        (0..self.columns.len()).filter(|&i| self.columns[i].role == role).collect()
    }

    pub fn with_shots(&self, shots: Vec<Vec<u8>>) -> ShotTable {
        let mut t = ShotTable { meta: self.meta.clone(), columns: self.columns.clone(), shots };
        t.meta.shots = t.shots.len();
        t
    }

    fn column_name(i: usize, c: &Cbit) -> String {
        match c.wire {
            Some(w) => format!("c{i}_{}_{w}", c.role.as_str()),
            None => format!("c{i}_{}", c.role.as_str()),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().enumerate().map(|(i, c)| Self::column_name(i, c)))?;
        for s in &self.shots {
            w.write_record(s.iter().map(|b| if *b == 0 { "0" } else { "1" }))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is ascii"))
    }

    pub fn sidecar_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses the CSV body against the column list of a sidecar.
    pub fn from_parts(csv_text: &str, sidecar: &str) -> Result<ShotTable> {
        let mut t: ShotTable = serde_json::from_str(sidecar)?;
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(csv_text.as_bytes());
        let header = r.headers()?.clone();
        let want: Vec<String> = t.columns.iter().enumerate().map(|(i, c)| Self::column_name(i, c)).collect();
        if header.iter().ne(want.iter().map(String::as_str)) {
            return Err(Error::InvalidInput("shot table header does not match its sidecar".into()));
        }
        for rec in r.records() {
            let rec = rec?;
            let row: Result<Vec<u8>> = rec
                .iter()
                .map(|f| match f {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    _ => Err(Error::InvalidInput(format!("bad bit {f:?} in shot table"))),
                })
                .collect();
            t.shots.push(row?);
        }
        if t.shots.len() != t.meta.shots {
            return Err(Error::InvalidInput(format!(
                "sidecar declares {} shots, table holds {}",
                t.meta.shots,
                t.shots.len()
            )));
        }
        Ok(t)
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        std::fs::write(stem.with_extension("csv"), self.to_csv()?)?;
        std::fs::write(stem.with_extension("json"), self.sidecar_json()?)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<ShotTable> {
        let csv_text = std::fs::read_to_string(stem.with_extension("csv"))?;
        let side = std::fs::read_to_string(stem.with_extension("json"))?;
        Self::from_parts(&csv_text, &side)
    }
}

/// Options beyond the circuit, noise and shot count.
#[derive(Debug, Clone, Copy)]
pub struct ShotOptions {
    pub seed: u64,
    pub fold: usize,
}

fn shot_rng(seed: u64, shot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot as u64);
    rng
}

const PAULIS: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

struct Prepared<'a> {
    c: &'a Circuit,
    start: Vec<f64>,
    end: Vec<f64>,
    gate_p: Vec<f64>,
    mats: Vec<Option<OpMatrix>>,
}

fn prepare<'a>(c: &'a Circuit, noise: &NoiseModel) -> Prepared<'a> {
    let start = schedule(c);
    let end = c
        .ops
        .iter()
        .zip(&start)
        .map(|(op, t)| if op.is_two_qubit() { t + TWO_QUBIT_DURATION } else { *t })
        .collect();
    let gate_p = c.ops.iter().map(|op| op.entangling_angle().map_or(0.0, |a| noise.pauli_prob(a))).collect();
    let mats = c.ops.iter().map(|op| op.matrix()).collect();
    Prepared { c, start, end, gate_p, mats }
}

fn one_shot(p: &Prepared, noise: &NoiseModel, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let c = p.c;
    let mut st = LiveState::new(c.num_qubits);
    let mut bits = vec![0u8; c.cbits.len()];
    let mut last = vec![0.0f64; c.num_qubits];
    let dephasing = noise.scale * noise.idle_dephase_rate > 0.0;
    for (i, op) in c.ops.iter().enumerate() {
        if dephasing {
            for q in op.qubits() {
                if st.slot[q].is_some() {
                    let pz = noise.idle_prob(p.start[i] - last[q]);
                    if pz > 0.0 && rng.gen::<f64>() < pz {
                        st.pauli(q, Pauli::Z);
                    }
                }
                last[q] = p.end[i];
            }
        }
        match *op {
            Op::MeasZ { q, cbit } => {
                let p1 = st.prob_one(q).clamp(0.0, 1.0);
                let b = u8::from(rng.gen::<f64>() < p1);
                st.collapse(q, b, if b == 1 { p1 } else { 1.0 - p1 });
                bits[cbit] = b;
            }
            Op::Reset { q } => {
                let p1 = st.prob_one(q).clamp(0.0, 1.0);
                let b = u8::from(rng.gen::<f64>() < p1);
                st.collapse(q, b, if b == 1 { p1 } else { 1.0 - p1 });
                st.value[q] = 0;
            }
            _ => {
                match &p.mats[i] {
                    Some(OpMatrix::One(q, u)) => st.apply1(*q, u),
                    Some(OpMatrix::Two(a, b, u)) => st.apply2(*a, *b, u),
                    None => unreachable!(),
                }
                let pe = p.gate_p[i];
                if pe > 0.0 && rng.gen::<f64>() < pe {
                    let qs = op.qubits();
                    let k = rng.gen_range(1..16usize);
                    st.pauli(qs[0], PAULIS[k >> 2]);
                    st.pauli(qs[1], PAULIS[k & 3]);
                }
            }
        }
    }
    debug_assert!((st.norm_sqr() - 1.0).abs() < 1e-6);
    bits
}

/// Samples `n` shots. Shot `s` draws from its own ChaCha stream
/// `(seed, s)`, so the table does not depend on how shots are scheduled.
pub fn run_shots(c: &Circuit, noise: &NoiseModel, n: usize, seed: u64) -> Result<ShotTable> {
    run_shots_with(c, noise, n, ShotOptions { seed, fold: 1 })
}

pub fn run_shots_with(c: &Circuit, noise: &NoiseModel, n: usize, opts: ShotOptions) -> Result<ShotTable> {
    check_width(c)?;
    noise.validate()?;
    let prepared = prepare(c, noise);
    let shots: Vec<Vec<u8>> = (0..n)
        .into_par_iter()
        .map(|s| one_shot(&prepared, noise, &mut shot_rng(opts.seed, s)))
        .collect();
    Ok(ShotTable {
        meta: ShotMeta {
            circuit_id: circuit_id(c)?,
            noise: *noise,
            noise_scale: noise.scale,
            seed: opts.seed,
            shots: n,
            fold: opts.fold,
        },
        columns: c.cbits.clone(),
        shots,
    })
}

/// Largest number of simultaneously attached qubits along a noiseless run.
pub fn live_width(c: &Circuit) -> Result<usize> {
    check_width(c)?;
    let mut live = vec![false; c.num_qubits];
    let (mut cur, mut peak) = (0usize, 0usize);
    for op in &c.ops {
        match *op {
            Op::MeasZ { q, .. } | Op::Reset { q } => {
                if live[q] {
                    live[q] = false;
                    cur -= 1;
                }
            }
            _ => {
                for q in op.qubits() {
                    if !live[q] {
                        live[q] = true;
                        cur += 1;
                    }
                }
                peak = peak.max(cur);
            }
        }
    }
    Ok(peak)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attach_and_collapse_roundtrip() {
        let mut st = LiveState::new(3);
        st.apply1(1, &Op::H { q: 1 }.matrix().map(|m| if let OpMatrix::One(_, u) = m { u } else { panic!() }).unwrap());
        st.value[2] = 1;
        st.attach(2);
        assert_eq!(st.order.len(), 2);
        assert!((st.prob_one(2) - 1.0).abs() < 1e-15);
        assert!((st.prob_one(1) - 0.5).abs() < 1e-15);
        st.collapse(1, 1, 0.5);
        assert_eq!(st.order.len(), 1);
        assert!((st.norm_sqr() - 1.0).abs() < 1e-15);
        assert_eq!(st.slot[2], Some(0));
    }

    #[test]
    fn effective_angle_wraps() {
        assert!((NoiseModel::effective_angle(0.3) - 0.3).abs() < 1e-15);
        assert!((NoiseModel::effective_angle(-0.3) - 0.3).abs() < 1e-15);
        assert!((NoiseModel::effective_angle(PI - 0.3) - 0.3).abs() < 1e-12);
        assert!((NoiseModel::effective_angle(PI / 2.0) - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn default_noise_hits_anchor() {
        let n = NoiseModel::default();
        assert!((n.infidelity(PI / 2.0) - 2e-3).abs() < 1e-15);
        assert!((n.infidelity(0.0) - 1e-4).abs() < 1e-18);
        assert!(n.validate().is_ok());
        assert!(NoiseModel { scale: 1e4, ..n }.validate().is_err());
        assert!(NoiseModel { p0: -1.0, ..n }.validate().is_err());
    }
}
