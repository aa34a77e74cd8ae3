use qmera_core::circuits::*;
use qmera_core::dense;
use qmera_core::mera::*;
use qmera_core::mps::*;
use qmera_core::oracle;
use qmera_core::pauli::Pauli;
use qmera_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn net(l: usize, chi: usize, range: f64, seed: u64) -> MeraNetwork {
    let cfg = MeraConfig::new(l, chi);
    build_mera(&cfg, random_params(&cfg, range, seed).unwrap()).unwrap()
}

fn overlap_deficit(a: &[C64], b: &[C64]) -> f64 {
    let ip: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let na: f64 = a.iter().map(|x| x.norm_sqr()).sum();
    let nb: f64 = b.iter().map(|x| x.norm_sqr()).sum();
    1.0 - ip.norm_sqr() / (na * nb)
}

#[test]
fn zero_angles_give_the_product_state() {
    let cfg = MeraConfig::new(16, 4);
    let n = build_mera(&cfg, vec![0.0; param_count(&cfg).unwrap()]).unwrap();
    let mut m = apply_circuit(&network_circuit(&n).unwrap(), 8).unwrap();
    assert!(m.bond_dims().iter().all(|&d| d == 1));
    assert_eq!(m.entropy_half(), 0.0);
    assert!((m.expect_pauli(&[(3, Pauli::Z)]).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn untruncated_evolution_matches_statevector() {
    for (l, chi) in [(8, 2), (8, 4), (16, 2)] {
        let n = net(l, chi, 1.5, 3);
        let c = network_circuit(&n).unwrap();
        assert_eq!(c.count("MEASZ"), 0);
        let m = apply_circuit(&c, 256).unwrap();
        assert!(m.truncation_error < 1e-20);
        let psi = statevector(&n).unwrap();
        assert!(overlap_deficit(&m.to_statevector().unwrap(), &psi) < 1e-9, "L={l} chi={chi}");
    }
}

#[test]
fn observables_match_dense() {
    let n = net(8, 4, 1.0, 5);
    let psi = statevector(&n).unwrap();
    let mut m = apply_circuit(&network_circuit(&n).unwrap(), 64).unwrap();
    for ops in [
        vec![(0, Pauli::X), (1, Pauli::X)],
        vec![(7, Pauli::X), (0, Pauli::X)],
        vec![(2, Pauli::Z)],
        vec![(1, Pauli::Y), (4, Pauli::Y)],
        vec![(0, Pauli::Z), (3, Pauli::X), (6, Pauli::X)],
    ] {
        let want = dense::expect_pauli(&psi, 8, &ops).re;
        assert!((m.expect_pauli(&ops).unwrap() - want).abs() < 1e-10, "{ops:?}");
    }
    let e = m.tfim_energy(1.0, 1.0).unwrap();
    assert!((e - statevector_energy(&n).unwrap()).abs() < 1e-10);
    let s = m.entropy_half();
    assert!((s - oracle::dense_entropy(8, &psi, 4)).abs() < 1e-9);
    assert!(m.expect_pauli(&[(1, Pauli::X), (1, Pauli::Z)]).is_err());
}

#[test]
fn bell_pair_entropy() {
    let mut c = Circuit::new(2);
    c.push(Op::H { q: 0 });
    c.push(Op::Cx { c: 0, t: 1 });
    let mut m = apply_circuit(&c, 4).unwrap();
    assert!((m.entropy_half() - std::f64::consts::LN_2).abs() < 1e-12);
    c.measure(0, Role::SiteZ, Some(0));
    assert!(apply_circuit(&c, 4).is_err());
}

#[test]
fn swap_routing_on_random_circuits() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 7;
    for _ in 0..5 {
        let mut c = Circuit::new(n);
        for _ in 0..25 {
            let a = rng.gen_range(0..n);
            let b = (a + rng.gen_range(1..n)) % n;
            let t = rng.gen_range(-3.0..3.0);
            c.push(match rng.gen_range(0..4) {
                0 => Op::Uxx { a, b, theta: t },
                1 => Op::Uyy { a, b, theta: t },
                2 => Op::Cx { c: a, t: b },
                _ => Op::H { q: a },
            });
            c.push(Op::Rz { q: b, phi: t });
        }
        let mut psi = dense::zero_state(n);
        for op in &c.ops {
            match op.matrix().unwrap() {
                OpMatrix::One(q, u) => dense::apply_1q(&mut psi, n, q, &u),
                OpMatrix::Two(a, b, u) => dense::apply_2q(&mut psi, n, a, b, &u),
            }
        }
        let m = apply_circuit(&c, 64).unwrap();
        assert!(overlap_deficit(&m.to_statevector().unwrap(), &psi) < 1e-10);
        assert!((m.norm_sqr() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn truncation_trends() {
    let n = net(32, 4, 1.2, 1);
    let c = network_circuit(&n).unwrap();
    let mut last_err = f64::INFINITY;
    for chi in [2, 4, 8, 16] {
        let mut m = apply_circuit(&c, chi).unwrap();
        assert!(m.bond_dims().iter().all(|&d| d <= chi));
        assert!((m.norm_sqr() - 1.0).abs() < 1e-10);
        let s = m.entropy_half();
        assert!(s >= 0.0 && s <= (chi as f64).ln() + 1e-12);
        assert!(m.truncation_error <= last_err, "chi {chi}");
        last_err = m.truncation_error;
    }
}

#[test]
fn sweep_table() {
    let n = net(16, 2, 0.8, 2);
    let e0 = oracle::ff_energy(16, 1.0).unwrap();
    let rows = chi_sweep(&n, &[4, 16, 64], e0, (0, 5)).unwrap();
    assert_eq!(rows.iter().map(|r| r.chi_mps).collect::<Vec<_>>(), vec![4, 16, 64]);
    let exact = correlator_xx(&n, 0, 5).unwrap();
    assert!((rows[2].xx - exact).abs() < 1e-8);
    assert!((rows[2].energy - statevector_energy(&n).unwrap()).abs() < 1e-8);
    assert!((rows[0].entropy_bits - rows[0].entropy / std::f64::consts::LN_2).abs() < 1e-15);
    let csv = chi_sweep_csv(&rows).unwrap();
    assert!(csv.starts_with("chi_mps,entropy_nats,entropy_bits,truncation_error,"));
    assert_eq!(csv.lines().count(), 4);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn truncated_states_stay_normalised(seed in any::<u64>(), chi in 1usize..6) {
            let n = net(16, 4, 1.0, seed);
            let mut m = apply_circuit(&network_circuit(&n).unwrap(), chi).unwrap();
            prop_assert!((m.norm_sqr() - 1.0).abs() < 1e-10);
            prop_assert!(m.bond_dims().iter().all(|&d| d <= chi));
            let s = m.entropy_half();
            prop_assert!(s >= -1e-12 && s <= (chi as f64).ln() + 1e-10);
            prop_assert!(m.truncation_error >= 0.0);
        }
    }
}
