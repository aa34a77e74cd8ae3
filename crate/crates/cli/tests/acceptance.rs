//! Acceptance criteria, one line each. Long runs (5, 8, 10) need `--ignored`
//! or `QMERA_SLOW=1`; they reuse optimized networks cached under
//! `target/acceptance`, which the fast criteria also pick up when present.
//! `QMERA_CRITERIA=1,2,7` restricts the run to a subset.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

use qmera_cli::{Run, RunConfig};
use qmera_core::analysis::{exact_points, fit_power_law, FitOptions};
use qmera_core::circuits::{fold_zne, pair_circuit, Circuit, Op, OpMatrix};
use qmera_core::compiler::{compile_for_simulation, resource_stats};
use qmera_core::mera::*;
use qmera_core::mitigation::{allocate_shots, postselect, zne, Estimate};
use qmera_core::optimizer::{finite_difference_gradient, optimize, shift_rule_gradient, OptConfig};
use qmera_core::pauli::Pauli;
use qmera_core::simulator::{run_shots, NoiseModel};
use qmera_core::{dense, mps, oracle, Result, C64};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn cached_run(config: &str, dir: &str) -> Result<Run> {
    let text = std::fs::read_to_string(root().join("configs").join(config))?;
    Run::new(RunConfig::from_json(&text)?, root().join("target/acceptance").join(dir))
}

fn c1() -> Result<Outcome> {
    let l = 4096;
    let per_site = oracle::ff_energy(l, 1.0)? / l as f64;
    let d1 = (per_site + 4.0 / PI).abs();
    let mut worst: f64 = 0.0;
    for l in (4..=14).step_by(2) {
        worst = worst.max((oracle::ed_solve(l, 1.0, 1.0)?.energy - oracle::ff_energy(l, 1.0)?).abs());
    }
    outcome(d1 < 1e-4 && worst < 1e-10, format!("|E/L + 4/pi| = {d1:.1e} at L=4096; max |ED - FF| = {worst:.1e} for L=4..14"))
}

fn c2() -> Result<Outcome> {
    let (mut parity_err, mut x_max, mut discards, mut shots): (f64, f64, usize, usize) = (0.0, 0.0, 0, 0);
    for (l, chi) in [(8, 2), (8, 4), (16, 2), (16, 4)] {
        let cfg = MeraConfig::new(l, chi);
        for seed in 0..50 {
            let net = build_mera(&cfg, random_params(&cfg, PI, 1000 * l as u64 + 10 * chi as u64 + seed)?)?;
            let psi = statevector(&net)?;
            let parity: f64 = psi.iter().enumerate().map(|(i, a)| a.norm_sqr() * if i.count_ones() % 2 == 0 { 1.0 } else { -1.0 }).sum();
            parity_err = parity_err.max((parity - 1.0).abs());
            for j in 0..l {
                x_max = x_max.max(dense::expect_pauli(&psi, l, &[(j, Pauli::X)]).norm());
            }
            if seed % 10 == 0 {
                let c = compile_for_simulation(&pair_circuit(&net, 1, 1 + l / 2)?, 20)?;
                let t = run_shots(&c.circuit, &NoiseModel::noiseless(), 200, seed)?;
                let (kept, _) = postselect(&t)?;
                discards += t.len() - kept.len();
                shots += t.len();
            }
        }
    }
    outcome(
        parity_err < 1e-10 && x_max < 1e-10 && discards == 0,
        format!("200 networks: max |parity - 1| = {parity_err:.1e}, max |<X_j>| = {x_max:.1e}; {discards} of {shots} noiseless shots discarded"),
    )
}

fn c3() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for (l, chi) in [(8, 2), (16, 4)] {
        let cfg = MeraConfig::new(l, chi);
        for seed in 0..10 {
            let net = build_mera(&cfg, random_params(&cfg, 1.0, 77 + seed)?)?;
            let a = shift_rule_gradient(&net)?;
            let b = finite_difference_gradient(&net, 1e-5)?;
            worst = worst.max(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
    }
    outcome(worst <= 1e-5, format!("max |shift - fd| = {worst:.1e} over 20 points at L=8 and L=16"))
}

fn c4() -> Result<Outcome> {
    let mut small = MeraConfig::new(16, 2);
    small.drop_top_disentanglers = false;
    let opt = OptConfig { max_iters: 1000, restarts: 1, ..Default::default() };
    let e16 = optimize(&small, &opt)?.energy;
    let ed = oracle::ed_solve(16, 1.0, 1.0)?.energy;
    let rel16 = ((e16 - ed) / ed).abs();
    let run = cached_run("l32.json", "l32")?;
    run.ensure_network()?;
    let rel32 = run.opt_summary()?.rel_error;
    outcome(rel16 <= 1e-3 && rel32 <= 5e-4, format!("L=16 chi=2: {rel16:.2e} (<= 1e-3); L=32 chi=4: {rel32:.2e} (<= 5e-4)"))
}

fn noiseless_eta(net: &MeraNetwork, run: &Run) -> Result<f64> {
    let pts = run
        .cfg
        .distances()
        .iter()
        .map(|&r| {
            let (j, k) = run.cfg.pair(r);
            Ok((r, correlator_xx(net, j, k)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(fit_power_law(&exact_points(&pts), &FitOptions::default())?.chisq.eta)
}

fn c5() -> Result<Outcome> {
    let run = cached_run("l128.json", "l128")?;
    let net = run.ensure_network()?;
    let rel = run.opt_summary()?.rel_error;
    let eta = noiseless_eta(&net, &run)?;
    outcome(
        rel <= 1e-4 && (0.21..=0.27).contains(&eta),
        format!("L=128 chi=4 relative energy error {rel:.2e} (<= 1e-4); noiseless eta {eta:.4} (in [0.21, 0.27])"),
    )
}

fn c6() -> Result<Outcome> {
    let run = cached_run("l128.json", "l128")?;
    let net = if run.network_fresh() { run.network()? } else { build_mera(&run.cfg.mera, vec![0.1; param_count(&run.cfg.mera)?])? };
    let (j, k) = run.cfg.pair(32);
    let s = resource_stats(&pair_circuit(&net, j, k)?, 32, 20)?;
    outcome(
        s.width_no_reuse == 37 && s.width_greedy <= 20 && s.depth_no_reuse <= s.depth_cap && s.depth_cap <= s.depth_greedy,
        format!(
            "r=32 at ({j},{k}): width {} / greedy {} / cap20 {}; depth {} <= {} <= {}",
            s.width_no_reuse, s.width_greedy, s.width_cap, s.depth_no_reuse, s.depth_cap, s.depth_greedy
        ),
    )
}

fn unitary(ops: &[Op]) -> Vec<C64> {
    let mut u = Vec::with_capacity(16);
    for col in 0..4 {
        let mut psi = vec![C64::new(0.0, 0.0); 4];
        psi[col] = C64::new(1.0, 0.0);
        for op in ops {
            match op.matrix().expect("unitary op") {
                OpMatrix::One(q, m) => dense::apply_1q(&mut psi, 2, q, &m),
                OpMatrix::Two(a, b, m) => dense::apply_2q(&mut psi, 2, a, b, &m),
            }
        }
        u.extend(psi);
    }
    u
}

fn c7() -> Result<Outcome> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let t: f64 = rng.gen_range(-PI..PI);
        for op in [Op::Uxx { a: 0, b: 1, theta: t }, Op::Uyy { a: 1, b: 0, theta: t }, Op::Uzz { a: 0, b: 1, theta: t }] {
            let mut c = Circuit::new(2);
            c.push(op);
            let f = fold_zne(&c, 3)?;
            let (u, v) = (unitary(&c.ops), unitary(&f.ops));
            worst = worst.max(u.iter().zip(&v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
        }
    }
    let est = |value, stderr| Estimate { value, stderr, n_total: 1, n_kept: 1, noise_scale: 1.0 };
    let z = zne(&est(0.9, 0.01), &est(0.7, 0.01), 3.0)?;
    let hand = (z.e0 - 1.0).abs() < 1e-12 && (z.sigma0 - 0.1f64.sqrt() / 20.0).abs() < 1e-12;
    let split = allocate_shots(8000, 3)? == (7200, 800) && allocate_shots(10_000, 3)? == (9000, 1000);
    outcome(
        worst < 1e-12 && hand && split,
        format!("fold error {worst:.1e} over 300 gates; e0 = {}, sigma0 = {:.4}; 8000 shots -> (7200, 800)", z.e0, z.sigma0),
    )
}

fn c8() -> Result<Outcome> {
    let base = cached_run("l32.json", "l32")?;
    base.ensure_network()?;
    let (mut good, mut raw_dev, mut zne_dev, mut n) = (0, 0.0, 0.0, 0usize);
    let mut per_seed = Vec::new();
    for seed in 1..=3u64 {
        let mut cfg = base.cfg.clone();
        cfg.seed = seed;
        let run = Run::new(cfg, root().join(format!("target/acceptance/l32_seed{seed}")))?;
        for f in ["network.json", "optimize.json"] {
            std::fs::copy(base.path(f), run.path(f))?;
        }
        let rep = run.run_all(|_| {})?;
        let ok = (rep.eta - rep.eta_noiseless).abs() <= 0.05 && (rep.eta - 0.25).abs() <= rep.eta_err;
        good += usize::from(ok);
        per_seed.push(format!("{:.3}+-{:.3}", rep.eta, rep.eta_err));
        for p in &rep.points {
            raw_dev += p.raw - p.noiseless;
            zne_dev += p.zne - p.noiseless;
            n += 1;
        }
        if seed == 3 {
            per_seed.push(format!("noiseless {:.3}", rep.eta_noiseless));
        }
    }
    let (raw_bias, zne_bias) = ((raw_dev / n as f64).abs(), (zne_dev / n as f64).abs());
    outcome(
        good >= 2 && zne_bias < raw_bias,
        format!(
            "L=32 eta {}; {good}/3 seeds within 0.05 and covering 0.25; mean bias raw {raw_bias:.4}, mitigated {zne_bias:.4}",
            per_seed.join(", ")
        ),
    )
}

fn c9() -> Result<Option<Outcome>> {
    let run = cached_run("l128.json", "l128")?;
    if !run.network_fresh() && !slow() {
        return Ok(None);
    }
    let net = run.ensure_network()?;
    let r = *run.cfg.distances().iter().max().unwrap();
    let (j, k) = run.cfg.pair(r);
    let c = compile_for_simulation(&fold_zne(&pair_circuit(&net, j, k)?, run.cfg.zne_m)?, run.cfg.reuse_cap)?;
    let t = run_shots(&c.circuit, &run.cfg.noise, 2000, 9)?;
    let (_, rate) = postselect(&t)?;
    Ok(Some(Outcome {
        pass: (0.1..=0.5).contains(&rate),
        detail: format!("L=128 r={r} folded x{}: discard rate {rate:.3} (in [0.1, 0.5])", run.cfg.zne_m),
    }))
}

fn c10() -> Result<Outcome> {
    let run = cached_run("l128.json", "l128")?;
    let net = run.ensure_network()?;
    let rows = mps::chi_sweep(&net, &[16, 32, 64, 128], qmera_cli::run::exact_energy(&run.cfg)?, (0, 31))?;
    let s = rows.last().unwrap().entropy_bits;
    let entropy_up = rows.windows(2).all(|w| w[1].entropy_bits >= w[0].entropy_bits - 1e-3);
    let trunc_down = rows.windows(2).all(|w| w[1].truncation_error <= w[0].truncation_error);
    let trend: Vec<String> = rows.iter().map(|r| format!("{}:{:.4}/{:.1e}", r.chi_mps, r.entropy_bits, r.truncation_error)).collect();
    outcome(
        (1.55..=1.63).contains(&s) && entropy_up && trunc_down,
        format!("S_half(chi_mps=128) = {s:.4} bits (in [1.55, 1.63]); chi:S/trunc {}", trend.join(" ")),
    )
}

fn c11() -> Result<Outcome> {
    let text = std::fs::read_to_string(root().join("configs/desk.json"))?;
    let tmp = tempfile::tempdir()?;
    let mut outs = Vec::new();
    for name in ["a", "b"] {
        let run = Run::new(RunConfig::from_json(&text)?, tmp.path().join(name))?;
        run.run_all(|_| {})?;
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(tmp.path().join(name))?
            .map(|e| {
                let e = e?;
                Ok((e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path())?))
            })
            .collect::<Result<_>>()?;
        files.sort();
        outs.push(files);
    }
    let same = outs[0] == outs[1];
    outcome(same, format!("two desk run-all invocations: {} files, byte-identical: {same}", outs[0].len()))
}

fn slow() -> bool {
    std::env::args().any(|a| a == "--ignored" || a == "--include-ignored") || std::env::var_os("QMERA_SLOW").is_some()
}

fn main() {
    // `cargo test -- --list` and filters come through as arguments
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let slow = slow();
    // QMERA_CRITERIA=1,2,7 runs a subset
    let only: Option<Vec<usize>> =
        std::env::var("QMERA_CRITERIA").ok().map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    type Check = fn() -> Result<Outcome>;
    let checks: [(usize, &str, bool, Check); 10] = [
        (1, "exact anchors", false, c1),
        (2, "symmetry invariants", false, c2),
        (3, "gradient check", false, c3),
        (4, "desk-scale optimization", false, c4),
        (5, "full-scale optimization", true, c5),
        (6, "resource counts", false, c6),
        (7, "ZNE algebra", false, c7),
        (8, "mitigation end-to-end", true, c8),
        (10, "MPS entropy", true, c10),
        (11, "determinism", false, c11),
    ];
    let mut failed = Vec::new();
    let mut run_one = |n: usize, name: &str, r: Result<Option<Outcome>>, secs: f64| match r {
        Ok(Some(o)) => {
            println!("criterion {n:>2} {name}: {} ({}) [{secs:.1} s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            if !o.pass {
                failed.push(n);
            }
        }
        Ok(None) => println!("criterion {n:>2} {name}: SKIP (needs the L=128 network; run with --ignored)"),
        Err(e) => {
            println!("criterion {n:>2} {name}: FAIL (error: {e}) [{secs:.1} s]");
            failed.push(n);
        }
    };
    for (n, name, is_slow, f) in checks {
        if n == 10 && wanted(9) {
            let t = Instant::now();
            run_one(9, "discard-rate band", c9(), t.elapsed().as_secs_f64());
        }
        if !wanted(n) {
            continue;
        }
        if is_slow && !slow {
            println!("criterion {n:>2} {name}: SKIP (slow; run with --ignored)");
            continue;
        }
        let t = Instant::now();
        let r = f().map(Some);
        run_one(n, name, r, t.elapsed().as_secs_f64());
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
