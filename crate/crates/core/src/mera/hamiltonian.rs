use crate::pauli::Pauli;

/// `coeff * prod ops` with ops on distinct sites.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub ops: Vec<(usize, Pauli)>,
}

/// Terms of `-J sum X_j X_{j+1} - h sum Z_j` with periodic wrap, ordered as
/// `XX(0,1), Z(0), XX(1,2), Z(1), ...`.
pub fn tfim_terms(l: usize, j: f64, h: f64) -> Vec<Term> {
    let mut out = Vec::with_capacity(2 * l);
    for s in 0..l {
        out.push(Term { coeff: -j, ops: vec![(s, Pauli::X), ((s + 1) % l, Pauli::X)] });
        out.push(Term { coeff: -h, ops: vec![(s, Pauli::Z)] });
    }
    out
}
