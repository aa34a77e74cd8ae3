//! The binary qMERA: layout, gates, causal cones and expectation values.
//!
//! Circuit order runs from the top of the network down: the top block acts
//! on the two coarsest bonds, then every level applies its isometries
//! (coarse bond + fresh qubits -> two finer bonds) followed by its
//! disentanglers on bonds `(2i+1, 2i+2 mod n)`.

pub mod config;
pub mod dm;
pub mod cone;
pub mod engine;
pub mod expect;
pub mod gate;
pub mod hamiltonian;
pub mod network;

pub use config::MeraConfig;
pub use cone::{causal_cone, CausalCone, ConeEvent};
pub use engine::EnergyEngine;
pub use expect::{correlator_xx, expect_local, expect_local_tn};
pub use gate::{gate_unitary, GateParams, PARAMS_PER_GATE};
pub use network::{build_mera, param_count, Block, BlockKind, MeraNetwork, NetGate, LAYOUT_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense;
use crate::{Error, Result, C64};

/// Largest chain the dense statevector path accepts.
pub const DENSE_MAX_SITES: usize = 20;

/// Uniform angles in `[-range, range]` from a seeded stream.
pub fn random_params(cfg: &MeraConfig, range: f64, seed: u64) -> Result<Vec<f64>> {
    let n = param_count(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| rng.gen_range(-range..=range)).collect())
}

/// Exact output state of the whole network (wire `s` is qubit `s`).
pub fn statevector(net: &MeraNetwork) -> Result<Vec<C64>> {
    let l = net.num_sites();
    if l > DENSE_MAX_SITES {
        return Err(Error::TooWide { width: l, limit: DENSE_MAX_SITES });
    }
    let mut psi = dense::zero_state(l);
    for (g, ng) in net.gates().iter().enumerate() {
        dense::apply_2q(&mut psi, l, ng.wires.0, ng.wires.1, &net.gate_matrix(g));
    }
    Ok(psi)
}

/// `<H>` from the dense statevector.
pub fn statevector_energy(net: &MeraNetwork) -> Result<f64> {
    let psi = statevector(net)?;
    let l = net.num_sites();
    let cfg = net.config();
    Ok(hamiltonian::tfim_terms(l, cfg.j, cfg.h)
        .iter()
        .map(|t| t.coeff * dense::expect_pauli(&psi, l, &t.ops).re)
        .sum())
}
