//! Gate-level circuit IR, lowering of causal cones, the XX parity gadget and
//! gate folding for zero-noise extrapolation.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::mera::gate::{kron, primitive, Generator, Mat4};
use crate::mera::{causal_cone, CausalCone, MeraNetwork};
use crate::pauli::Pauli;
use crate::{Error, Result, C64};

/// What a classical bit measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    ConeExit,
    SiteZ,
    XxAncilla,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::ConeExit => "cone_exit",
            Role::SiteZ => "site_z",
            Role::XxAncilla => "xx_ancilla",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cbit {
    pub role: Role,
    /// Network wire (output site) the bit reads out; `None` for the ancilla.
    pub wire: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Rz { q: usize, phi: f64 },
    Uxx { a: usize, b: usize, theta: f64 },
    Uyy { a: usize, b: usize, theta: f64 },
    Uzz { a: usize, b: usize, theta: f64 },
    H { q: usize },
    Cx { c: usize, t: usize },
    Reset { q: usize },
    MeasZ { q: usize, cbit: usize },
}

/// Matrix form of a unitary op.
pub enum OpMatrix {
    One(usize, [C64; 4]),
    Two(usize, usize, Mat4),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Rz { .. } => "RZ",
            Op::Uxx { .. } => "UXX",
            Op::Uyy { .. } => "UYY",
            Op::Uzz { .. } => "UZZ",
            Op::H { .. } => "H",
            Op::Cx { .. } => "CX",
            Op::Reset { .. } => "RESET",
            Op::MeasZ { .. } => "MEASZ",
        }
    }

    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Op::Rz { q, .. } | Op::H { q } | Op::Reset { q } | Op::MeasZ { q, .. } => vec![q],
            Op::Uxx { a, b, .. } | Op::Uyy { a, b, .. } | Op::Uzz { a, b, .. } => vec![a, b],
            Op::Cx { c, t } => vec![c, t],
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(self, Op::Uxx { .. } | Op::Uyy { .. } | Op::Uzz { .. } | Op::Cx { .. })
    }

    /// Rotation angle of a two-qubit gate; CX counts as a maximally
    /// entangling `pi/2` gate.
    pub fn entangling_angle(&self) -> Option<f64> {
        match *self {
            Op::Uxx { theta, .. } | Op::Uyy { theta, .. } | Op::Uzz { theta, .. } => Some(theta),
            Op::Cx { .. } => Some(PI / 2.0),
            _ => None,
        }
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            Op::Rz { phi, .. } => vec![phi],
            Op::Uxx { theta, .. } | Op::Uyy { theta, .. } | Op::Uzz { theta, .. } => vec![theta],
            _ => Vec::new(),
        }
    }

    fn remap(&self, f: impl Fn(usize) -> usize) -> Op {
        match *self {
            Op::Rz { q, phi } => Op::Rz { q: f(q), phi },
            Op::Uxx { a, b, theta } => Op::Uxx { a: f(a), b: f(b), theta },
            Op::Uyy { a, b, theta } => Op::Uyy { a: f(a), b: f(b), theta },
            Op::Uzz { a, b, theta } => Op::Uzz { a: f(a), b: f(b), theta },
            Op::H { q } => Op::H { q: f(q) },
            Op::Cx { c, t } => Op::Cx { c: f(c), t: f(t) },
            Op::Reset { q } => Op::Reset { q: f(q) },
            Op::MeasZ { q, cbit } => Op::MeasZ { q: f(q), cbit },
        }
    }

    pub fn with_qubits(&self, f: impl Fn(usize) -> usize) -> Op {
        self.remap(f)
    }

    /// `None` for reset and measurement.
    pub fn matrix(&self) -> Option<OpMatrix> {
        let c = |re: f64, im: f64| C64::new(re, im);
        Some(match *self {
            Op::Rz { q, phi } => {
                let (s, co) = (phi / 2.0).sin_cos();
                OpMatrix::One(q, [c(co, -s), c(0.0, 0.0), c(0.0, 0.0), c(co, s)])
            }
            Op::H { q } => {
                let r = std::f64::consts::FRAC_1_SQRT_2;
                OpMatrix::One(q, [c(r, 0.0), c(r, 0.0), c(r, 0.0), c(-r, 0.0)])
            }
            Op::Uxx { a, b, theta } => OpMatrix::Two(a, b, primitive(Generator::XX, theta)),
            Op::Uyy { a, b, theta } => OpMatrix::Two(a, b, primitive(Generator::YY, theta)),
            Op::Uzz { a, b, theta } => {
                let zz = kron(&Pauli::Z.matrix(), &Pauli::Z.matrix());
                let (s, co) = (theta / 2.0).sin_cos();
                let mut m = [[c(0.0, 0.0); 4]; 4];
                for i in 0..4 {
                    m[i][i] = c(co, 0.0) + c(0.0, -s) * zz[i][i];
                }
                OpMatrix::Two(a, b, m)
            }
            Op::Cx { c: ctl, t } => {
                let mut m = [[c(0.0, 0.0); 4]; 4];
                m[0][0] = c(1.0, 0.0);
                m[1][1] = c(1.0, 0.0);
                m[2][3] = c(1.0, 0.0);
                m[3][2] = c(1.0, 0.0);
                OpMatrix::Two(ctl, t, m)
            }
            Op::Reset { .. } | Op::MeasZ { .. } => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Circuit {
    pub num_qubits: usize,
    pub ops: Vec<Op>,
    pub cbits: Vec<Cbit>,
    /// Output sites still carried (unmeasured) by a qubit: `site -> qubit`.
    pub outputs: BTreeMap<usize, usize>,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Self {
        Circuit { num_qubits, ..Default::default() }
    }

    pub fn push(&mut self, op: Op) {
        self.ops.push(op);
    }

    /// Appends a measurement into a fresh classical bit and returns its index.
    pub fn measure(&mut self, q: usize, role: Role, wire: Option<usize>) -> usize {
        self.cbits.push(Cbit { role, wire });
        let cbit = self.cbits.len() - 1;
        self.ops.push(Op::MeasZ { q, cbit });
        cbit
    }

    pub fn two_qubit_count(&self) -> usize {
        self.ops.iter().filter(|o| o.is_two_qubit()).count()
    }

    pub fn count(&self, name: &str) -> usize {
        self.ops.iter().filter(|o| o.name() == name).count()
    }

    pub fn cbits_with(&self, role: Role) -> Vec<usize> {
        (0..self.cbits.len()).filter(|&i| self.cbits[i].role == role).collect()
    }

    /// Qubit indices in range, every classical bit written exactly once, and
    /// no use of a measured qubit before a reset.
    pub fn validate(&self) -> Result<()> {
        let mut measured = vec![false; self.num_qubits];
        let mut written = vec![false; self.cbits.len()];
        for (i, op) in self.ops.iter().enumerate() {
            let qs = op.qubits();
            if let Some(&q) = qs.iter().find(|&&q| q >= self.num_qubits) {
                return Err(Error::InvalidInput(format!("op {i} ({}) uses qubit {q} of {}", op.name(), self.num_qubits)));
            }
            if qs.len() == 2 && qs[0] == qs[1] {
                return Err(Error::InvalidInput(format!("op {i} ({}) repeats qubit {}", op.name(), qs[0])));
            }
            match *op {
                Op::Reset { q } => measured[q] = false,
                Op::MeasZ { q, cbit } => {
                    if measured[q] {
                        return Err(Error::InvalidInput(format!("op {i} measures qubit {q} twice without reset")));
                    }
                    if cbit >= written.len() || written[cbit] {
                        return Err(Error::InvalidInput(format!("op {i} writes classical bit {cbit} badly")));
                    }
                    written[cbit] = true;
                    measured[q] = true;
                }
                _ => {
                    if let Some(&q) = qs.iter().find(|&&q| measured[q]) {
                        return Err(Error::InvalidInput(format!(
                            "op {i} ({}) touches qubit {q} after its measurement",
                            op.name()
                        )));
                    }
                }
            }
        }
        if let Some(b) = written.iter().position(|w| !w) {
            return Err(Error::InvalidInput(format!("classical bit {b} is never written")));
        }
        for (&s, &q) in &self.outputs {
            if q >= self.num_qubits || measured[q] {
                return Err(Error::InvalidInput(format!("output site {s} is not live on qubit {q}")));
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let header = Record {
            op: "CIRCUIT".into(),
            qubits: vec![self.num_qubits],
            params: Vec::new(),
            cbit: None,
            role: None,
            wire: None,
            outputs: Some(self.outputs.iter().map(|(&s, &q)| [s, q]).collect()),
        };
        out.push_str(&serde_json::to_string(&header)?);
        out.push('\n');
        for op in &self.ops {
            let (cbit, role, wire) = match *op {
                Op::MeasZ { cbit, .. } => {
                    let cb = self.cbits[cbit];
                    (Some(cbit), Some(cb.role), cb.wire)
                }
                _ => (None, None, None),
            };
            let r = Record { op: op.name().into(), qubits: op.qubits(), params: op.params(), cbit, role, wire, outputs: None };
            out.push_str(&serde_json::to_string(&r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(s: &str) -> Result<Circuit> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let head: Record = serde_json::from_str(
            lines.next().ok_or_else(|| Error::InvalidInput("empty circuit file".into()))?,
        )?;
        if head.op != "CIRCUIT" || head.qubits.len() != 1 {
            return Err(Error::InvalidInput("circuit file must start with a CIRCUIT header".into()));
        }
        let mut c = Circuit::new(head.qubits[0]);
        c.outputs = head.outputs.unwrap_or_default().into_iter().map(|[s, q]| (s, q)).collect();
        let mut cbits: BTreeMap<usize, Cbit> = BTreeMap::new();
        for (n, line) in lines.enumerate() {
            let r: Record = serde_json::from_str(line)?;
            let bad = || Error::InvalidInput(format!("record {}: malformed {}", n + 1, r.op));
            let q1 = || -> Result<usize> { if r.qubits.len() == 1 { Ok(r.qubits[0]) } else { Err(bad()) } };
            let q2 = || -> Result<(usize, usize)> {
                if r.qubits.len() == 2 { Ok((r.qubits[0], r.qubits[1])) } else { Err(bad()) }
            };
            let p1 = || -> Result<f64> { if r.params.len() == 1 { Ok(r.params[0]) } else { Err(bad()) } };
            let op = match r.op.as_str() {
                "RZ" => Op::Rz { q: q1()?, phi: p1()? },
                "UXX" => { let (a, b) = q2()?; Op::Uxx { a, b, theta: p1()? } }
                "UYY" => { let (a, b) = q2()?; Op::Uyy { a, b, theta: p1()? } }
                "UZZ" => { let (a, b) = q2()?; Op::Uzz { a, b, theta: p1()? } }
                "H" => Op::H { q: q1()? },
                "CX" => { let (c, t) = q2()?; Op::Cx { c, t } }
                "RESET" => Op::Reset { q: q1()? },
                "MEASZ" => {
                    let cbit = r.cbit.ok_or_else(bad)?;
                    let role = r.role.ok_or_else(bad)?;
                    if cbits.insert(cbit, Cbit { role, wire: r.wire }).is_some() {
                        return Err(bad());
                    }
                    Op::MeasZ { q: q1()?, cbit }
                }
                other => return Err(Error::InvalidInput(format!("unknown op {other}"))),
            };
            c.ops.push(op);
        }
        if cbits.keys().enumerate().any(|(i, &k)| i != k) {
            return Err(Error::InvalidInput("classical bits are not numbered 0..n".into()));
        }
        c.cbits = cbits.into_values().collect();
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    op: String,
    qubits: Vec<usize>,
    params: Vec<f64>,
    cbit: Option<usize>,
    role: Option<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wire: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outputs: Option<Vec<[usize; 2]>>,
}

/// Executable circuit of a causal cone: one qubit per cone wire, numbered in
/// injection order, each network gate expanded into its native rotations,
/// and every wire that leaves the cone measured right after its last gate.
pub fn lower(net: &MeraNetwork, cone: &CausalCone) -> Result<Circuit> {
    let mut qubit = vec![usize::MAX; net.num_sites()];
    for (i, e) in cone.injections.iter().enumerate() {
        qubit[e.wire] = i;
    }
    let mut c = Circuit::new(cone.wires.len());
    let mut exits = cone.exits.iter().peekable();
    for (step, &g) in cone.gates.iter().enumerate() {
        let ng = &net.gates()[g];
        let (a, b) = (qubit[ng.wires.0], qubit[ng.wires.1]);
        if a == usize::MAX || b == usize::MAX {
            return Err(Error::InvalidInput("cone does not belong to this network".into()));
        }
        let p = net.gate_slice(g);
        c.push(Op::Rz { q: a, phi: p[0] });
        c.push(Op::Rz { q: b, phi: p[1] });
        c.push(Op::Uxx { a, b, theta: p[2] });
        c.push(Op::Uyy { a, b, theta: p[3] });
        c.push(Op::Rz { q: a, phi: p[4] });
        c.push(Op::Rz { q: b, phi: p[5] });
        while let Some(e) = exits.next_if(|e| e.step == step) {
            c.measure(qubit[e.wire], Role::ConeExit, Some(e.wire));
        }
    }
    for &s in &cone.sites {
        c.outputs.insert(s, qubit[s]);
    }
    Ok(c)
}

/// Ancilla-assisted `X_j X_k` readout followed by `Z` on both sites.
/// The ancilla bit `b` gives the `X_j X_k` eigenvalue `(-1)^b`.
pub fn attach_gadget(c: &Circuit, j: usize, k: usize) -> Result<Circuit> {
    if j == k {
        return Err(Error::InvalidInput("gadget sites must differ".into()));
    }
    let qj = *c.outputs.get(&j).ok_or_else(|| Error::InvalidInput(format!("site {j} is not a live output")))?;
    let qk = *c.outputs.get(&k).ok_or_else(|| Error::InvalidInput(format!("site {k} is not a live output")))?;
    let mut out = c.clone();
    let anc = out.num_qubits;
    out.num_qubits += 1;
    out.push(Op::H { q: anc });
    out.push(Op::Cx { c: anc, t: qj });
    out.push(Op::Cx { c: anc, t: qk });
    out.push(Op::H { q: anc });
    out.measure(anc, Role::XxAncilla, None);
    out.measure(qj, Role::SiteZ, Some(j));
    out.measure(qk, Role::SiteZ, Some(k));
    out.outputs.remove(&j);
    out.outputs.remove(&k);
    Ok(out)
}

/// Cone of `{j, k}`, lowered, with the gadget attached.
pub fn pair_circuit(net: &MeraNetwork, j: usize, k: usize) -> Result<Circuit> {
    let cone = causal_cone(net, &[j, k])?;
    attach_gadget(&lower(net, &cone)?, j, k)
}

/// Replaces every two-qubit gate `U` by `m` copies whose product is `U`:
/// `U (Z1 U Z1) U (Z1 U Z1) ... U`, using `Z1 U_G(t) Z1 = U_G(-t)` for
/// `G = XX, YY`. The conjugating `Z` is written as `Rz(-pi)` before and
/// `Rz(pi)` after, which is exactly `Z . Z` with no stray phase. `U_ZZ`
/// commutes with `Z`, so its inverse copies take the negated angle, and `CX`
/// is its own inverse.
pub fn fold_zne(c: &Circuit, m: usize) -> Result<Circuit> {
    if m == 0 || m % 2 == 0 {
        return Err(Error::InvalidInput(format!("fold factor must be odd, got {m}")));
    }
    let mut out = Circuit { ops: Vec::with_capacity(c.ops.len() * m), ..c.clone() };
    for op in &c.ops {
        out.ops.push(*op);
        if !op.is_two_qubit() {
            continue;
        }
        for _ in 0..(m - 1) / 2 {
            match *op {
                Op::Uxx { a, .. } | Op::Uyy { a, .. } => {
                    out.ops.push(Op::Rz { q: a, phi: -PI });
                    out.ops.push(*op);
                    out.ops.push(Op::Rz { q: a, phi: PI });
                }
                Op::Uzz { a, b, theta } => out.ops.push(Op::Uzz { a, b, theta: -theta }),
                Op::Cx { .. } => out.ops.push(*op),
                _ => unreachable!(),
            }
            out.ops.push(*op);
        }
    }
    Ok(out)
}
