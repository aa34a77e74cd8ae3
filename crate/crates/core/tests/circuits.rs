use std::f64::consts::PI;

use qmera_core::circuits::*;
use qmera_core::compiler::total_variation;
use qmera_core::dense;
use qmera_core::mera::gate::{matmul4, Mat4};
use qmera_core::mera::*;
use qmera_core::pauli::{Pauli, PauliString};
use qmera_core::simulator::{final_state, run_noiseless};
use qmera_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn net(l: usize, chi: usize, seed: u64) -> MeraNetwork {
    let cfg = MeraConfig::new(l, chi);
    build_mera(&cfg, random_params(&cfg, 1.2, seed).unwrap()).unwrap()
}

/// Unitary of a two-qubit op list, column by column.
fn unitary(ops: &[Op]) -> Mat4 {
    let mut u = [[C64::new(0.0, 0.0); 4]; 4];
    for col in 0..4 {
        let mut psi = vec![C64::new(0.0, 0.0); 4];
        psi[col] = C64::new(1.0, 0.0);
        for op in ops {
            match op.matrix().unwrap() {
                OpMatrix::One(q, m) => dense::apply_1q(&mut psi, 2, q, &m),
                OpMatrix::Two(a, b, m) => dense::apply_2q(&mut psi, 2, a, b, &m),
            }
        }
        for row in 0..4 {
            u[row][col] = psi[row];
        }
    }
    u
}

fn max_dev(a: &Mat4, b: &Mat4) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            m = m.max((a[i][j] - b[i][j]).norm());
        }
    }
    m
}

#[test]
fn lowered_cone_reproduces_expectations() {
    for chi in [2, 4] {
        let n = net(8, chi, 4);
        let cone = causal_cone(&n, &[0, 4]).unwrap();
        let c = lower(&n, &cone).unwrap();
        c.validate().unwrap();
        assert_eq!(c.num_qubits, cone.wires.len());
        assert_eq!(c.two_qubit_count(), 2 * cone.gates.len());
        assert_eq!(c.cbits_with(Role::ConeExit).len(), cone.wires.len() - 2);
        let psi = final_state(&c).unwrap();
        let (q0, q4) = (c.outputs[&0], c.outputs[&4]);
        for (p0, p4) in [(Pauli::X, Pauli::X), (Pauli::Y, Pauli::Y), (Pauli::Z, Pauli::Z), (Pauli::Z, Pauli::I)] {
            let want = expect_local(&n, &{
                let mut s = PauliString::new();
                s.set(0, p0);
                s.set(4, p4);
                s
            })
            .unwrap();
            let got = dense::expect_pauli(&psi, c.num_qubits, &[(q0, p0), (q4, p4)]).re;
            assert!((got - want).abs() < 1e-9, "chi={chi} {p0:?}{p4:?}");
        }
    }
}

#[test]
fn lowering_preserves_reduced_state_of_the_pair() {
    // all 16 two-site Pauli moments of (j, k) agree with the full network
    for (l, chi, j, k) in [(8, 2, 1, 6), (8, 4, 2, 3), (16, 2, 3, 12)] {
        let n = net(l, chi, 11);
        let full = statevector(&n).unwrap();
        let c = lower(&n, &causal_cone(&n, &[j, k]).unwrap()).unwrap();
        let psi = final_state(&c).unwrap();
        for pj in Pauli::ALL {
            for pk in Pauli::ALL {
                let a = dense::expect_pauli(&full, l, &[(j, pj), (k, pk)]);
                let b = dense::expect_pauli(&psi, c.num_qubits, &[(c.outputs[&j], pj), (c.outputs[&k], pk)]);
                assert!((a - b).norm() < 1e-10, "L={l} {pj:?}{pk:?}");
            }
        }
    }
}

#[test]
fn deepest_pair_circuit_resources() {
    let cfg = MeraConfig::new(128, 4);
    let n = build_mera(&cfg, vec![0.0; param_count(&cfg).unwrap()]).unwrap();
    let c = pair_circuit(&n, 14, 46).unwrap();
    assert_eq!(c.num_qubits, 37);
    let g = c.two_qubit_count();
    assert!((140..=180).contains(&g), "{g}");
    assert_eq!(fold_zne(&c, 3).unwrap().two_qubit_count(), 3 * g);
}

fn two_site(prep: &[Op]) -> Circuit {
    let mut c = Circuit::new(2);
    for op in prep {
        c.push(*op);
    }
    c.outputs.insert(0, 0);
    c.outputs.insert(1, 1);
    attach_gadget(&c, 0, 1).unwrap()
}

fn ancilla_one_prob(c: &Circuit) -> f64 {
    let anc = c.cbits_with(Role::XxAncilla)[0];
    run_noiseless(c).unwrap().iter().filter(|(b, _)| b[anc] == 1).map(|(_, p)| p).sum()
}

#[test]
fn gadget_reads_xx_eigenvalue() {
    // X-basis product states: |+> = H|0>, |-> = H|1> = H X|0>
    let plus_plus = two_site(&[Op::H { q: 0 }, Op::H { q: 1 }]);
    assert!(ancilla_one_prob(&plus_plus) < 1e-15);
    // |1> from Rz-free ops: H Rz(pi) H = -i X
    let flip = |q| [Op::H { q }, Op::Rz { q, phi: PI }, Op::H { q }];
    let mut ops: Vec<Op> = flip(1).to_vec();
    ops.extend([Op::H { q: 0 }, Op::H { q: 1 }]);
    assert!((ancilla_one_prob(&two_site(&ops)) - 1.0).abs() < 1e-15);
    let mut ops: Vec<Op> = flip(0).to_vec();
    ops.extend(flip(1));
    ops.extend([Op::H { q: 0 }, Op::H { q: 1 }]);
    assert!(ancilla_one_prob(&two_site(&ops)) < 1e-15);
}

#[test]
fn gadget_on_ghz_pair() {
    // (|00> + |11>)/sqrt2 has X X = +1
    let c = two_site(&[Op::H { q: 0 }, Op::Cx { c: 0, t: 1 }]);
    let dist = run_noiseless(&c).unwrap();
    let anc = c.cbits_with(Role::XxAncilla)[0];
    let z = c.cbits_with(Role::SiteZ);
    let mut total = 0.0;
    for (b, p) in &dist {
        assert_eq!(b[anc], 0);
        assert_eq!(b[z[0]], b[z[1]], "site outcomes correlated");
        total += p;
    }
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(dist.len(), 2);
}

#[test]
fn gadget_rejects_measured_sites() {
    let c = two_site(&[Op::H { q: 0 }]);
    assert!(attach_gadget(&c, 0, 1).is_err());
    let mut c = Circuit::new(2);
    c.outputs.insert(0, 0);
    assert!(attach_gadget(&c, 0, 1).is_err());
}

#[test]
fn folding_is_unitary_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let t: f64 = rng.gen_range(-PI..PI);
        for op in [
            Op::Uxx { a: 0, b: 1, theta: t },
            Op::Uyy { a: 0, b: 1, theta: t },
            Op::Uzz { a: 0, b: 1, theta: t },
            Op::Uxx { a: 1, b: 0, theta: t },
            Op::Cx { c: 0, t: 1 },
        ] {
            let mut c = Circuit::new(2);
            c.push(op);
            for m in [3, 5] {
                let f = fold_zne(&c, m).unwrap();
                assert_eq!(f.two_qubit_count(), m);
                assert!(max_dev(&unitary(&f.ops), &unitary(&c.ops)) < 1e-12, "{op:?} m={m}");
            }
        }
    }
}

#[test]
fn folding_single_xx() {
    let mut c = Circuit::new(2);
    c.push(Op::Uxx { a: 0, b: 1, theta: 0.7 });
    let f = fold_zne(&c, 3).unwrap();
    let want = unitary(&c.ops);
    assert!(max_dev(&unitary(&f.ops), &want) < 1e-12);
    // middle copy is the sign-flipped gate: Z1 U(t) Z1 = U(-t)
    let mid = unitary(&f.ops[1..4]);
    let inv = unitary(&[Op::Uxx { a: 0, b: 1, theta: -0.7 }]);
    assert!(max_dev(&mid, &inv) < 1e-12);
    assert!(max_dev(&matmul4(&want, &mid), &unitary(&[])) < 1e-12);
    assert!(fold_zne(&c, 2).is_err());
    assert!(fold_zne(&c, 0).is_err());
}

#[test]
fn folding_keeps_the_outcome_distribution() {
    let n = net(8, 2, 8);
    let c = pair_circuit(&n, 1, 5).unwrap();
    let a = run_noiseless(&c).unwrap();
    let b = run_noiseless(&fold_zne(&c, 3).unwrap()).unwrap();
    assert!(total_variation(&a, &b) < 1e-10);
    assert_eq!(fold_zne(&c, 3).unwrap().count("RZ"), c.count("RZ") + 2 * (c.count("UXX") + c.count("UYY")));
}

#[test]
fn jsonl_roundtrip() {
    let n = net(16, 4, 2);
    let c = fold_zne(&pair_circuit(&n, 3, 9).unwrap(), 3).unwrap();
    let s = c.to_jsonl().unwrap();
    assert_eq!(s.lines().count(), c.ops.len() + 1);
    let back = Circuit::from_jsonl(&s).unwrap();
    assert_eq!(back, c);
    let first_op: serde_json::Value = serde_json::from_str(s.lines().nth(1).unwrap()).unwrap();
    for key in ["op", "qubits", "params", "cbit", "role"] {
        assert!(first_op.get(key).is_some(), "{key}");
    }
}

#[test]
fn malformed_jsonl_is_rejected() {
    let head = r#"{"op":"CIRCUIT","qubits":[2],"params":[],"cbit":null,"role":null,"outputs":[]}"#;
    for body in [
        r#"{"op":"UXX","qubits":[0],"params":[0.1],"cbit":null,"role":null}"#,
        r#"{"op":"FOO","qubits":[0],"params":[],"cbit":null,"role":null}"#,
        r#"{"op":"RZ","qubits":[5],"params":[0.1],"cbit":null,"role":null}"#,
        r#"{"op":"MEASZ","qubits":[0],"params":[],"cbit":3,"role":"site_z"}"#,
    ] {
        assert!(Circuit::from_jsonl(&format!("{head}\n{body}\n")).is_err(), "{body}");
    }
    assert!(Circuit::from_jsonl("").is_err());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn folding_preserves_the_unitary(t in -10.0f64..10.0, kind in 0usize..3, m in prop::sample::select(vec![3usize, 5, 7])) {
            let op = match kind {
                0 => Op::Uxx { a: 0, b: 1, theta: t },
                1 => Op::Uyy { a: 1, b: 0, theta: t },
                _ => Op::Uzz { a: 0, b: 1, theta: t },
            };
            let mut c = Circuit::new(2);
            c.push(op);
            let f = fold_zne(&c, m).unwrap();
            prop_assert_eq!(f.two_qubit_count(), m);
            let (u, v) = (unitary(&c.ops), unitary(&f.ops));
            for r in 0..4 {
                for s in 0..4 {
                    prop_assert!((u[r][s] - v[r][s]).norm() < 1e-12);
                }
            }
        }

        #[test]
        fn jsonl_roundtrip_of_random_pairs(seed in any::<u64>(), j in 0usize..8, d in 1usize..5) {
            let cfg = MeraConfig::new(8, 2);
            let n = build_mera(&cfg, random_params(&cfg, 2.0, seed).unwrap()).unwrap();
            let c = pair_circuit(&n, j, (j + d) % 8).unwrap();
            let back = Circuit::from_jsonl(&c.to_jsonl().unwrap()).unwrap();
            prop_assert_eq!(back.to_jsonl().unwrap(), c.to_jsonl().unwrap());
        }
    }
}
