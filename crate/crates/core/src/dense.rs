//! Statevector kernels. Qubit `k` of an `n`-qubit register is bit `n-1-k`
//! of a basis index.

use crate::mera::gate::Mat4;
use crate::pauli::Pauli;
use crate::C64;

#[inline]
pub fn bit(n: usize, k: usize) -> usize {
    1 << (n - 1 - k)
}

pub fn zero_state(n: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); 1 << n];
    v[0] = C64::new(1.0, 0.0);
    v
}

/// Applies `u` (basis |q_a q_b>, `a` more significant) to qubits `a`, `b`.
pub fn apply_2q(psi: &mut [C64], n: usize, a: usize, b: usize, u: &Mat4) {
    let (ma, mb) = (bit(n, a), bit(n, b));
    for s in 0..psi.len() {
        if s & (ma | mb) != 0 {
            continue;
        }
        let idx = [s, s | mb, s | ma, s | ma | mb];
        let v = [psi[idx[0]], psi[idx[1]], psi[idx[2]], psi[idx[3]]];
        for (r, &i) in idx.iter().enumerate() {
            psi[i] = u[r][0] * v[0] + u[r][1] * v[1] + u[r][2] * v[2] + u[r][3] * v[3];
        }
    }
}

/// Applies a row-major 2x2 matrix to qubit `a`.
pub fn apply_1q(psi: &mut [C64], n: usize, a: usize, u: &[C64; 4]) {
    let m = bit(n, a);
    for s in 0..psi.len() {
        if s & m != 0 {
            continue;
        }
        let (x, y) = (psi[s], psi[s | m]);
        psi[s] = u[0] * x + u[1] * y;
        psi[s | m] = u[2] * x + u[3] * y;
    }
}

/// `<psi| P |psi>` for a product of Paulis on distinct qubits.
pub fn expect_pauli(psi: &[C64], n: usize, ops: &[(usize, Pauli)]) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (s, amp) in psi.iter().enumerate() {
        let mut t = s;
        let mut phase = C64::new(1.0, 0.0);
        for &(q, p) in ops {
            let b = (s >> (n - 1 - q)) & 1;
            let (nb, ph) = p.action(b);
            if nb != b {
                t ^= bit(n, q);
            }
            phase *= ph;
        }
        acc += psi[t].conj() * phase * amp;
    }
    acc
}

pub fn norm_sqr(psi: &[C64]) -> f64 {
    psi.iter().map(|z| z.norm_sqr()).sum()
}

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
