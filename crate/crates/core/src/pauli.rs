//! Single-qubit Pauli operators and Pauli strings.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    /// Row-major 2x2 matrix.
    pub fn matrix(self) -> [C64; 4] {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli::I => [l, o, o, l],
            Pauli::X => [o, l, l, o],
            Pauli::Y => [o, -i, i, o],
            Pauli::Z => [l, o, o, -l],
        }
    }

    /// Action on a computational basis bit: `P|b> = phase |b ^ flip>`.
    pub fn action(self, bit: usize) -> (usize, C64) {
        match self {
            Pauli::I => (bit, C64::new(1.0, 0.0)),
            Pauli::X => (bit ^ 1, C64::new(1.0, 0.0)),
            // Y|0> = i|1>, Y|1> = -i|0>
            Pauli::Y => (bit ^ 1, if bit == 0 { C64::new(0.0, 1.0) } else { C64::new(0.0, -1.0) }),
            Pauli::Z => (bit, if bit == 0 { C64::new(1.0, 0.0) } else { C64::new(-1.0, 0.0) }),
        }
    }

    /// Whether this Pauli anticommutes with `Z`.
    pub fn flips_z(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    pub fn from_char(c: char) -> Option<Pauli> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        };
        write!(f, "{c}")
    }
}

/// A tensor product of Paulis on a set of sites; identity elsewhere.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PauliString {
    ops: BTreeMap<usize, Pauli>,
}

impl PauliString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(site: usize, p: Pauli) -> Self {
        let mut s = Self::new();
        s.set(site, p);
        s
    }

    pub fn pair(a: usize, pa: Pauli, b: usize, pb: Pauli) -> Self {
        let mut s = Self::new();
        s.set(a, pa);
        s.set(b, pb);
        s
    }

    /// Identity factors are dropped.
    pub fn set(&mut self, site: usize, p: Pauli) {
        if p == Pauli::I {
            self.ops.remove(&site);
        } else {
            self.ops.insert(site, p);
        }
    }

    pub fn sites(&self) -> Vec<usize> {
        self.ops.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Pauli)> + '_ {
        self.ops.iter().map(|(&s, &p)| (s, p))
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}
