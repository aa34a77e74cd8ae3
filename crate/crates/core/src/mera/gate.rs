//! The Z2-symmetric two-qubit gate `(Rz x Rz)(post) U_YY(a) U_XX(t) (Rz x Rz)(pre)`.

use serde::{Deserialize, Serialize};

use crate::pauli::Pauli;
use crate::C64;

pub const PARAMS_PER_GATE: usize = 6;

/// 4x4 matrix, row-major, basis |q0 q1> with q0 the more significant bit.
pub type Mat4 = [[C64; 4]; 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub pre_z: [f64; 2],
    pub theta_xx: f64,
    pub alpha_yy: f64,
    pub post_z: [f64; 2],
}

impl GateParams {
    pub fn from_slice(p: &[f64]) -> Self {
        Self { pre_z: [p[0], p[1]], theta_xx: p[2], alpha_yy: p[3], post_z: [p[4], p[5]] }
    }

    pub fn to_array(&self) -> [f64; PARAMS_PER_GATE] {
        [self.pre_z[0], self.pre_z[1], self.theta_xx, self.alpha_yy, self.post_z[0], self.post_z[1]]
    }
}

/// One factor `exp(-i angle/2 G)` of the gate; `G` is `Z` on one qubit or
/// `XX` / `YY` on both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Z0,
    Z1,
    XX,
    YY,
}

impl Generator {
    pub fn matrix(self) -> Mat4 {
        let (a, b) = match self {
            Generator::Z0 => (Pauli::Z, Pauli::I),
            Generator::Z1 => (Pauli::I, Pauli::Z),
            Generator::XX => (Pauli::X, Pauli::X),
            Generator::YY => (Pauli::Y, Pauli::Y),
        };
        kron(&a.matrix(), &b.matrix())
    }
}

/// Generators in application order; parameter slot `k` drives `SEQUENCE[k]`.
pub const SEQUENCE: [Generator; PARAMS_PER_GATE] =
    [Generator::Z0, Generator::Z1, Generator::XX, Generator::YY, Generator::Z0, Generator::Z1];

pub fn kron(a: &[C64; 4], b: &[C64; 4]) -> Mat4 {
    let mut m = [[C64::new(0.0, 0.0); 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m[2 * i + k][2 * j + l] = a[2 * i + j] * b[2 * k + l];
                }
            }
        }
    }
    m
}

pub fn identity4() -> Mat4 {
    let mut m = [[C64::new(0.0, 0.0); 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = C64::new(1.0, 0.0);
    }
    m
}

pub fn matmul4(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut m = [[C64::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            let aik = a[i][k];
            for j in 0..4 {
                m[i][j] += aik * b[k][j];
            }
        }
    }
    m
}

pub fn dagger4(a: &Mat4) -> Mat4 {
    let mut m = [[C64::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = a[j][i].conj();
        }
    }
    m
}

/// `exp(-i angle/2 G)`; all generators are diagonal or an involutive
/// permutation times phases, so `cos - i sin G` is exact.
pub fn primitive(g: Generator, angle: f64) -> Mat4 {
    let gm = g.matrix();
    let (s, c) = (angle / 2.0).sin_cos();
    let mut m = [[C64::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = C64::new(0.0, -s) * gm[i][j];
        }
        m[i][i] += c;
    }
    m
}

pub fn gate_unitary(p: &GateParams) -> Mat4 {
    let arr = p.to_array();
    let mut u = identity4();
    for (g, &a) in SEQUENCE.iter().zip(&arr) {
        u = matmul4(&primitive(*g, a), &u);
    }
    u
}

/// Unitaries after each prefix: `prefix[k] = P_k ... P_1` (k primitives applied).
pub fn prefixes(p: &[f64]) -> [Mat4; PARAMS_PER_GATE + 1] {
    let mut out = [identity4(); PARAMS_PER_GATE + 1];
    for k in 0..PARAMS_PER_GATE {
        out[k + 1] = matmul4(&primitive(SEQUENCE[k], p[k]), &out[k]);
    }
    out
}

/// Derivatives of `E` with respect to the six angles of a gate, given
/// `K = Tr_rest(rho_in O_in)` where `rho_in` is the state entering the gate
/// and `O_in = U^dag O U` the pulled-back observable. Each slot contributes
/// `Im Tr(G_k X_k)` with `X_k = V_k K V_k^dag`, `V_k` the first `k+1` factors.
pub fn param_grads(p: &[f64], k: &Mat4) -> [f64; PARAMS_PER_GATE] {
    let pre = prefixes(p);
    let mut out = [0.0; PARAMS_PER_GATE];
    for s in 0..PARAMS_PER_GATE {
        let v = &pre[s + 1];
        let x = matmul4(&matmul4(v, k), &dagger4(v));
        let g = SEQUENCE[s].matrix();
        let mut tr = C64::new(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                tr += g[i][j] * x[j][i];
            }
        }
        out[s] = tr.im;
    }
    out
}
