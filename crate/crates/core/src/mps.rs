//! Matrix-product-state evolution of the full network circuit with fixed
//! bond-dimension truncation, used for half-chain entanglement estimates.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{lower, Circuit, Op, OpMatrix};
use crate::mera::gate::{kron, matmul4, Mat4};
use crate::mera::{causal_cone, MeraNetwork};
use crate::pauli::Pauli;
use crate::{Error, Result, C64};

type Mat = DMatrix<C64>;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Site tensors `a[i][s]` of shape `(D_left, D_right)`, kept in mixed
/// canonical form around `center`.
#[derive(Debug, Clone)]
pub struct Mps {
    sites: Vec<[Mat; 2]>,
    center: usize,
    pub chi_max: usize,
    /// Sum of discarded squared singular values over all truncations.
    pub truncation_error: f64,
}

fn swap_gate() -> Mat4 {
    let mut m = [[ZERO; 4]; 4];
    m[0][0] = ONE;
    m[1][2] = ONE;
    m[2][1] = ONE;
    m[3][3] = ONE;
    m
}

/// Same gate with the roles of its two qubits exchanged.
fn flip(u: &Mat4) -> Mat4 {
    let p = [0, 2, 1, 3];
    let mut m = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[p[i]][p[j]] = u[i][j];
        }
    }
    m
}

fn id2() -> [C64; 4] {
    [ONE, ZERO, ZERO, ONE]
}

impl Mps {
    /// `|0...0>` on `n` sites.
    pub fn product_zero(n: usize, chi_max: usize) -> Result<Mps> {
        if n == 0 || chi_max == 0 {
            return Err(Error::InvalidInput("MPS needs at least one site and chi_max >= 1".into()));
        }
        let sites = (0..n).map(|_| [Mat::from_element(1, 1, ONE), Mat::zeros(1, 1)]).collect();
        Ok(Mps { sites, center: 0, chi_max, truncation_error: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn center(&self) -> usize {
        self.center
    }

    /// Bond dimensions between neighbouring sites.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.len() - 1].iter().map(|s| s[0].ncols()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        let c = &self.sites[self.center];
        c[0].norm_squared() + c[1].norm_squared()
    }

    fn step_right(&mut self) {
        let i = self.center;
        let [a0, a1] = &self.sites[i];
        let (dl, dr) = a0.shape();
        let mut m = Mat::zeros(2 * dl, dr);
        m.rows_mut(0, dl).copy_from(a0);
        m.rows_mut(dl, dl).copy_from(a1);
        let qr = m.qr();
        let (q, r) = (qr.q(), qr.r());
        let k = q.ncols();
        self.sites[i] = [q.rows(0, dl).into_owned(), q.rows(dl, dl).into_owned()];
        let next = &mut self.sites[i + 1];
        next[0] = &r * &next[0];
        next[1] = &r * &next[1];
        debug_assert_eq!(next[0].nrows(), k);
        self.center = i + 1;
    }

    fn step_left(&mut self) {
        let i = self.center;
        let [a0, a1] = &self.sites[i];
        let (dl, dr) = a0.shape();
        let mut m = Mat::zeros(dl, 2 * dr);
        m.columns_mut(0, dr).copy_from(a0);
        m.columns_mut(dr, dr).copy_from(a1);
        // m = R^H Q^H from the QR of m^H
        let qr = m.adjoint().qr();
        let (q, r) = (qr.q().adjoint(), qr.r().adjoint());
        self.sites[i] = [q.columns(0, dr).into_owned(), q.columns(dr, dr).into_owned()];
        let prev = &mut self.sites[i - 1];
        prev[0] = &prev[0] * &r;
        prev[1] = &prev[1] * &r;
        self.center = i - 1;
    }

    /// Moves the orthogonality centre to site `i`.
    pub fn move_center(&mut self, i: usize) {
        while self.center < i {
            self.step_right();
        }
        while self.center > i {
            self.step_left();
        }
    }

    pub fn apply_1q(&mut self, i: usize, u: &[C64; 4]) {
        let [a0, a1] = &self.sites[i];
        let b0 = a0 * u[0] + a1 * u[1];
        let b1 = a0 * u[2] + a1 * u[3];
        self.sites[i] = [b0, b1];
    }

    /// Applies `u` to sites `(i, i+1)` (site `i` is the first gate index),
    /// then splits by SVD keeping at most `chi_max` singular values. The
    /// centre ends on `i + 1`.
    pub fn apply_2q_adjacent(&mut self, i: usize, u: &Mat4) -> Result<()> {
        if i + 1 >= self.len() {
            return Err(Error::InvalidInput(format!("no bond to the right of site {i}")));
        }
        if self.center < i {
            self.move_center(i);
        } else if self.center > i + 1 {
            self.move_center(i + 1);
        }
        let dl = self.sites[i][0].nrows();
        let dr = self.sites[i + 1][0].ncols();
        let mut theta: [[Mat; 2]; 2] = Default::default();
        for s in 0..2 {
            for t in 0..2 {
                theta[s][t] = &self.sites[i][s] * &self.sites[i + 1][t];
            }
        }
        let mut m = Mat::zeros(2 * dl, 2 * dr);
        for s in 0..2 {
            for t in 0..2 {
                let mut blk = Mat::zeros(dl, dr);
                for s0 in 0..2 {
                    for t0 in 0..2 {
                        let g = u[2 * s + t][2 * s0 + t0];
                        if g != ZERO {
                            blk += &theta[s0][t0] * g;
                        }
                    }
                }
                m.view_mut((s * dl, t * dr), (dl, dr)).copy_from(&blk);
            }
        }
        let svd = m.svd(true, true);
        let (uu, vt) = (svd.u.ok_or_else(svd_err)?, svd.v_t.ok_or_else(svd_err)?);
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
        let keep: Vec<usize> =
            order.iter().copied().take(self.chi_max).filter(|&k| svd.singular_values[k] > 1e-14 * total.sqrt()).collect();
        let keep = if keep.is_empty() { vec![order[0]] } else { keep };
        let kept: f64 = keep.iter().map(|&k| svd.singular_values[k].powi(2)).sum();
        if total > 0.0 {
            self.truncation_error += (total - kept) / total;
        }
        let norm = kept.sqrt();
        let d = keep.len();
        let mut left = Mat::zeros(2 * dl, d);
        let mut right = Mat::zeros(d, 2 * dr);
        for (c, &k) in keep.iter().enumerate() {
            left.set_column(c, &uu.column(k));
            let s = svd.singular_values[k] / norm;
            right.set_row(c, &(vt.row(k) * C64::new(s, 0.0)));
        }
        self.sites[i] = [left.rows(0, dl).into_owned(), left.rows(dl, dl).into_owned()];
        self.sites[i + 1] = [right.columns(0, dr).into_owned(), right.columns(dr, dr).into_owned()];
        self.center = i + 1;
        Ok(())
    }

    /// Two-qubit gate on arbitrary sites, routed by swapping `b` next to
    /// `a` and back.
    pub fn apply_2q(&mut self, a: usize, b: usize, u: &Mat4) -> Result<()> {
        if a == b || a >= self.len() || b >= self.len() {
            return Err(Error::InvalidInput(format!("bad gate sites ({a}, {b})")));
        }
        let (lo, hi, g) = if a < b { (a, b, *u) } else { (b, a, flip(u)) };
        let sw = swap_gate();
        for p in (lo + 1..hi).rev() {
            self.apply_2q_adjacent(p, &sw)?;
        }
        self.apply_2q_adjacent(lo, &g)?;
        for p in lo + 1..hi {
            self.apply_2q_adjacent(p, &sw)?;
        }
        Ok(())
    }

    /// Singular values across the bond between sites `i` and `i+1`.
    pub fn schmidt_values(&mut self, i: usize) -> Vec<f64> {
        self.move_center(i);
        let [a0, a1] = &self.sites[i];
        let (dl, dr) = a0.shape();
        let mut m = Mat::zeros(2 * dl, dr);
        m.rows_mut(0, dl).copy_from(a0);
        m.rows_mut(dl, dl).copy_from(a1);
        let n = m.norm();
        m.singular_values().iter().map(|s| s / n).collect()
    }

    /// Von Neumann entropy in nats of sites `0..=i` versus the rest.
    pub fn entropy_at(&mut self, i: usize) -> f64 {
        self.schmidt_values(i).iter().map(|s| s * s).filter(|&p| p > 1e-300).map(|p| -p * p.ln()).sum()
    }

    /// Entropy of the left half in nats.
    pub fn entropy_half(&mut self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        self.entropy_at(n / 2 - 1)
    }

    /// `<P_1 ... P_k>` of a Pauli string on distinct sites.
    pub fn expect_pauli(&mut self, ops: &[(usize, Pauli)]) -> Result<f64> {
        if ops.is_empty() {
            return Ok(1.0);
        }
        let mut sorted = ops.to_vec();
        sorted.sort_by_key(|o| o.0);
        if sorted.windows(2).any(|w| w[0].0 == w[1].0) || sorted.last().unwrap().0 >= self.len() {
            return Err(Error::InvalidInput("Pauli string sites must be distinct and in range".into()));
        }
        let (first, last) = (sorted[0].0, sorted.last().unwrap().0);
        self.move_center(first);
        let mut env = Mat::identity(self.sites[first][0].nrows(), self.sites[first][0].nrows());
        let mut next = sorted.iter().peekable();
        for i in first..=last {
            let p = match next.peek() {
                Some(&&(s, p)) if s == i => {
                    next.next();
                    p
                }
                _ => Pauli::I,
            };
            let m = pauli_matrix(p);
            let a = &self.sites[i];
            let mut out = Mat::zeros(a[0].ncols(), a[0].ncols());
            for s in 0..2 {
                for t in 0..2 {
                    let w = m[2 * s + t];
                    if w != ZERO {
                        out += a[s].adjoint() * &env * &a[t] * w;
                    }
                }
            }
            env = out;
        }
        let norm = self.norm_sqr();
        Ok(env.trace().re / norm)
    }

    /// Periodic TFIM energy `-J sum X_i X_{i+1} - h sum Z_i`.
    pub fn tfim_energy(&mut self, j: f64, h: f64) -> Result<f64> {
        let n = self.len();
        let mut e = 0.0;
        for i in 0..n {
            e -= j * self.expect_pauli(&[(i, Pauli::X), ((i + 1) % n, Pauli::X)])?;
            e -= h * self.expect_pauli(&[(i, Pauli::Z)])?;
        }
        Ok(e)
    }

    /// Amplitudes of the full state (site 0 most significant); small `n` only.
    pub fn to_statevector(&self) -> Result<Vec<C64>> {
        let n = self.len();
        if n > crate::simulator::DENSE_LIMIT {
            return Err(Error::TooWide { width: n, limit: crate::simulator::DENSE_LIMIT });
        }
        let mut out = Vec::with_capacity(1 << n);
        for idx in 0..1usize << n {
            let mut v = Mat::from_element(1, 1, ONE);
            for (i, a) in self.sites.iter().enumerate() {
                v = v * &a[(idx >> (n - 1 - i)) & 1];
            }
            out.push(v[(0, 0)]);
        }
        Ok(out)
    }
}

fn svd_err() -> Error {
    Error::Numerical("SVD did not return singular vectors".into())
}

fn pauli_matrix(p: Pauli) -> [C64; 4] {
    let i = C64::new(0.0, 1.0);
    match p {
        Pauli::I => [ONE, ZERO, ZERO, ONE],
        Pauli::X => [ZERO, ONE, ONE, ZERO],
        Pauli::Y => [ZERO, -i, i, ZERO],
        Pauli::Z => [ONE, ZERO, ZERO, -ONE],
    }
}

/// The whole network as a measurement-free circuit whose qubit `q` is
/// output site `q`.
pub fn network_circuit(net: &MeraNetwork) -> Result<Circuit> {
    let sites: Vec<usize> = (0..net.num_sites()).collect();
    let c = lower(net, &causal_cone(net, &sites)?)?;
    let mut to_site = vec![usize::MAX; c.num_qubits];
    for (&site, &q) in &c.outputs {
        to_site[q] = site;
    }
    if to_site.contains(&usize::MAX) {
        return Err(Error::Numerical("full-network lowering left a qubit without an output site".into()));
    }
    let ops = c.ops.iter().map(|op| op.with_qubits(|q| to_site[q])).collect();
    let mut out = Circuit::new(c.num_qubits);
    out.ops = ops;
    out.outputs = (0..c.num_qubits).map(|s| (s, s)).collect();
    Ok(out)
}

/// Runs a unitary circuit on `|0...0>`. Consecutive ops on the same pair
/// (and single-qubit ops on its qubits) are merged before each SVD.
pub fn apply_circuit(c: &Circuit, chi_max: usize) -> Result<Mps> {
    if c.ops.iter().any(|o| matches!(o, Op::MeasZ { .. } | Op::Reset { .. })) {
        return Err(Error::InvalidInput("MPS evolution takes unitary circuits only".into()));
    }
    let mut mps = Mps::product_zero(c.num_qubits, chi_max)?;
    let mut pending: Option<(usize, usize, Mat4)> = None;
    let flush = |mps: &mut Mps, p: &mut Option<(usize, usize, Mat4)>| -> Result<()> {
        if let Some((a, b, u)) = p.take() {
            mps.apply_2q(a, b, &u)?;
        }
        Ok(())
    };
    for op in &c.ops {
        match op.matrix().expect("unitary op") {
            OpMatrix::One(q, u) => match &mut pending {
                Some((a, b, g)) if q == *a || q == *b => {
                    let k = if q == *a { kron(&u, &id2()) } else { kron(&id2(), &u) };
                    *g = matmul4(&k, g);
                }
                _ => mps.apply_1q(q, &u),
            },
            OpMatrix::Two(x, y, u) => {
                let merged = match &mut pending {
                    Some((a, b, g)) if (x, y) == (*a, *b) => {
                        *g = matmul4(&u, g);
                        true
                    }
                    Some((a, b, g)) if (x, y) == (*b, *a) => {
                        *g = matmul4(&flip(&u), g);
                        true
                    }
                    _ => false,
                };
                if !merged {
                    flush(&mut mps, &mut pending)?;
                    pending = Some((x, y, u));
                }
            }
        }
    }
    flush(&mut mps, &mut pending)?;
    Ok(mps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiPoint {
    pub chi_mps: usize,
    /// Half-chain entropy in nats.
    pub entropy: f64,
    pub entropy_bits: f64,
    pub truncation_error: f64,
    pub energy: f64,
    pub energy_rel_err: f64,
    pub xx: f64,
    pub max_bond: usize,
}

/// Evolves the network at each bond dimension (in parallel) and records
/// entropy, truncation error, energy and one long-range correlator.
pub fn chi_sweep(net: &MeraNetwork, chis: &[usize], energy_exact: f64, xx_pair: (usize, usize)) -> Result<Vec<ChiPoint>> {
    let c = network_circuit(net)?;
    let (jj, hh) = (net.config().j, net.config().h);
    chis.par_iter()
        .map(|&chi| {
            let mut m = apply_circuit(&c, chi)?;
            let entropy = m.entropy_half();
            let energy = m.tfim_energy(jj, hh)?;
            let xx = m.expect_pauli(&[(xx_pair.0, Pauli::X), (xx_pair.1, Pauli::X)])?;
            Ok(ChiPoint {
                chi_mps: chi,
                entropy,
                entropy_bits: entropy / std::f64::consts::LN_2,
                truncation_error: m.truncation_error,
                energy,
                energy_rel_err: ((energy - energy_exact) / energy_exact).abs(),
                xx,
                max_bond: m.bond_dims().into_iter().max().unwrap_or(1),
            })
        })
        .collect()
}

pub fn chi_sweep_csv(rows: &[ChiPoint]) -> Result<String> {
    use crate::mitigation::fmt;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["chi_mps", "entropy_nats", "entropy_bits", "truncation_error", "energy", "energy_rel_err", "xx", "max_bond"])?;
    for r in rows {
        w.write_record([
            r.chi_mps.to_string(),
            fmt(r.entropy),
            fmt(r.entropy_bits),
            fmt(r.truncation_error),
            fmt(r.energy),
            fmt(r.energy_rel_err),
            fmt(r.xx),
            r.max_bond.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("ascii"))
}
