//! Exact references for the periodic transverse-field Ising chain
//! `H = -J sum_j X_j X_{j+1} - h sum_j Z_j` (indices mod L).
//!
//! Small chains are diagonalised directly (dense below 256 states, Lanczos
//! up to 16 sites). Any even length is covered by the free-fermion solution in
//! the even-parity sector, where the Jordan-Wigner fermions are antiperiodic.
//!
//! Basis convention shared by every dense routine in the crate: site 0 is the
//! most significant bit of a basis index.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const ED_MAX_SITES: usize = 16;
const DENSE_MAX_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    pub l: usize,
    pub j: f64,
    pub h: f64,
    pub g: f64,
    pub energy: f64,
    pub per_site: f64,
    /// `xx[a][b] = <X_a X_b>` in the ground state; only filled by ED.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xx: Option<Vec<Vec<f64>>>,
}

#[inline]
pub(crate) fn site_bit(l: usize, site: usize) -> usize {
    1 << (l - 1 - site)
}

fn apply_h(l: usize, j: f64, h: f64, x: &[f64], y: &mut [f64]) {
    let masks: Vec<usize> = (0..l).map(|b| site_bit(l, b) | site_bit(l, (b + 1) % l)).collect();
    for (s, ys) in y.iter_mut().enumerate() {
        let up = s.count_ones() as f64;
        let mut acc = -h * (l as f64 - 2.0 * up) * x[s];
        for &m in &masks {
            acc -= j * x[s ^ m];
        }
        *ys = acc;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    n
}

fn lowest_of_tridiagonal(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let k = alpha.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (idx, &val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    (val, eig.eigenvectors.column(idx).iter().copied().collect())
}

/// Ground energy and real ground-state vector of the chain.
///
/// Lanczos starts from an even-parity vector; the Hamiltonian conserves
/// parity and for `h > 0` the ground state lives in that sector.
pub fn ed_ground_state(l: usize, j: f64, h: f64) -> Result<(f64, Vec<f64>)> {
    if !(2..=ED_MAX_SITES).contains(&l) {
        return Err(Error::InvalidInput(format!(
            "exact diagonalisation supports 2..={ED_MAX_SITES} sites, got {l}"
        )));
    }
    let dim = 1usize << l;
    if dim <= DENSE_MAX_DIM {
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        let mut e = vec![0.0; dim];
        let mut col = vec![0.0; dim];
        for c in 0..dim {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[c] = 1.0;
            apply_h(l, j, h, &e, &mut col);
            for r in 0..dim {
                m[(r, c)] = col[r];
            }
        }
        let eig = SymmetricEigen::new(m);
        let (idx, &val) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        return Ok((val, eig.eigenvectors.column(idx).iter().copied().collect()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..dim)
        .map(|s| if s.count_ones() % 2 == 0 { rng.gen_range(-1.0..1.0) } else { 0.0 })
        .collect();
    normalize(&mut v);
    let max_iter = 400.min(dim);
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];
    let mut best = (f64::NAN, Vec::new());
    for k in 0..max_iter {
        apply_h(l, j, h, &basis[k], &mut w);
        let a = dot(&basis[k], &w);
        alpha.push(a);
        // two passes of full reorthogonalisation
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = dot(&w, &w).sqrt();
        let (theta, y) = lowest_of_tridiagonal(&alpha, &beta);
        let resid = b * y[k].abs();
        best = (theta, y);
        if resid < 1e-12 * theta.abs().max(1.0) || b < 1e-14 {
            break;
        }
        beta.push(b);
        let next: Vec<f64> = w.iter().map(|x| x / b).collect();
        basis.push(next);
    }
    let (energy, y) = best;
    let mut psi = vec![0.0; dim];
    for (q, c) in basis.iter().zip(&y) {
        psi.iter_mut().zip(q).for_each(|(p, x)| *p += c * x);
    }
    normalize(&mut psi);
    Ok((energy, psi))
}

/// `<psi| X_a X_b |psi>` for a real state.
pub fn xx_correlation(l: usize, psi: &[f64], a: usize, b: usize) -> f64 {
    if a == b {
        return dot(psi, psi);
    }
    let m = site_bit(l, a) | site_bit(l, b);
    psi.iter().enumerate().map(|(s, &x)| x * psi[s ^ m]).sum()
}

pub fn ed_solve(l: usize, j: f64, h: f64) -> Result<ExactSolution> {
    let (energy, psi) = ed_ground_state(l, j, h)?;
    let xx = (0..l)
        .map(|a| (0..l).map(|b| xx_correlation(l, &psi, a, b)).collect())
        .collect();
    Ok(ExactSolution {
        l,
        j,
        h,
        g: h / j,
        energy,
        per_site: energy / l as f64,
        xx: Some(xx),
    })
}

/// Momenta of the antiperiodic sector, `k_n = (2n - 1) pi / L`, `n = 1..=L/2`.
fn ns_momenta(l: usize) -> impl Iterator<Item = f64> {
    (1..=l / 2).map(move |n| (2 * n - 1) as f64 * std::f64::consts::PI / l as f64)
}

/// Free-fermion ground energy for `J = 1` and field `g`.
///
/// Each positive momentum pairs with its negative partner, so the sum runs
/// over `k > 0` only: `E = -sum_{k>0} 2 sqrt(1 + g^2 - 2 g cos k)`. At `g = 0`
/// this reduces to `-L`, the classical ferromagnet.
pub fn ff_energy(l: usize, g: f64) -> Result<f64> {
    if l < 2 || l % 2 == 1 {
        return Err(Error::InvalidInput(format!("free-fermion solution needs even L >= 2, got {l}")));
    }
    Ok(-ns_momenta(l).map(|k| 2.0 * (1.0 + g * g - 2.0 * g * k.cos()).sqrt()).sum::<f64>())
}

pub fn ff_solve(l: usize, j: f64, h: f64) -> Result<ExactSolution> {
    let energy = j * ff_energy(l, h / j)?;
    Ok(ExactSolution { l, j, h, g: h / j, energy, per_site: energy / l as f64, xx: None })
}

/// Majorana covariance `Gamma_mn = (i/2) <[g_m, g_n]>` of the even-parity
/// ground state, with `g_{2j} = P_j X_j`, `g_{2j+1} = P_j Y_j`, `P_j` the Z
/// string on sites before `j`. Field `g`, `J = 1`.
pub fn ff_covariance(l: usize, g: f64) -> Result<DMatrix<f64>> {
    if l < 2 || l % 2 == 1 {
        return Err(Error::InvalidInput(format!("free-fermion solution needs even L >= 2, got {l}")));
    }
    let n = 2 * l;
    // H = (i/4) sum A_mn g_m g_n; a term i*c*g_a*g_b contributes A_ab = 2c.
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut add = |p: usize, q: usize, c: f64| {
        a[(p, q)] += 2.0 * c;
        a[(q, p)] -= 2.0 * c;
    };
    for s in 0..l {
        add(2 * s, 2 * s + 1, g); // -g Z_s = i g g_{2s} g_{2s+1}
        if s + 1 < l {
            add(2 * s + 1, 2 * s + 2, 1.0); // -X_s X_{s+1}
        } else {
            // wrap bond picks up the parity string; +1 sector flips its sign
            add(2 * s + 1, 0, -1.0);
        }
    }
    let ata = a.transpose() * &a;
    let eig = SymmetricEigen::new(ata);
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / x.max(1e-300).sqrt()));
    let m = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    Ok(-(a * m))
}

fn binary_entropy_nats(p: f64) -> f64 {
    let f = |x: f64| if x > 1e-300 { -x * x.ln() } else { 0.0 };
    f(p) + f(1.0 - p)
}

/// Von Neumann entropy (nats) of sites `0..cut` in the free-fermion ground
/// state at field `g`.
pub fn ff_entropy(l: usize, g: f64, cut: usize) -> Result<f64> {
    if cut == 0 || cut >= l {
        return Err(Error::InvalidInput(format!("cut {cut} outside 1..{l}")));
    }
    let gamma = ff_covariance(l, g)?;
    let sub = gamma.view((0, 0), (2 * cut, 2 * cut)).into_owned();
    // eigenvalues of sub^T sub come in degenerate pairs nu^2
    let eig = SymmetricEigen::new(sub.transpose() * &sub);
    let s: f64 = eig
        .eigenvalues
        .iter()
        .map(|&x| binary_entropy_nats((1.0 + x.clamp(0.0, 1.0).sqrt()) / 2.0))
        .sum();
    Ok(s / 2.0)
}

/// Same as [`ff_entropy`] in bits.
pub fn ff_entropy_bits(l: usize, g: f64, cut: usize) -> Result<f64> {
    Ok(ff_entropy(l, g, cut)? / std::f64::consts::LN_2)
}

/// Entropy (nats) of the leading `cut` sites of a dense state.
pub fn dense_entropy(l: usize, psi: &[crate::C64], cut: usize) -> f64 {
    let rows = 1usize << cut;
    let cols = 1usize << (l - cut);
    let m = DMatrix::from_fn(rows, cols, |r, c| psi[r * cols + c]);
    let sv = m.singular_values();
    sv.iter()
        .map(|s| {
            let p = s * s;
            if p > 1e-300 {
                -p * p.ln()
            } else {
                0.0
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;
    use std::f64::consts::PI;

    #[test]
    fn two_sites_count_both_bonds() {
        // 4x4 by hand: -2 XX has eigenvalues -2, -2, 2, 2.
        let (e, _) = ed_ground_state(2, 1.0, 0.0).unwrap();
        assert!((e + 2.0).abs() < 1e-12);
    }

    #[test]
    fn ed_matches_free_fermions() {
        for l in [4, 6, 8, 10] {
            let ed = ed_ground_state(l, 1.0, 1.0).unwrap().0;
            let ff = ff_energy(l, 1.0).unwrap();
            assert!((ed - ff).abs() < 1e-10, "L={l}: {ed} vs {ff}");
        }
    }

    #[test]
    fn lanczos_path_matches_free_fermions() {
        let ed = ed_ground_state(12, 1.0, 1.0).unwrap().0;
        assert!((ed - ff_energy(12, 1.0).unwrap()).abs() < 1e-10);
        let ed = ed_ground_state(10, 1.0, 0.6).unwrap().0;
        assert!((ed - ff_energy(10, 0.6).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn zero_field_is_classical_ferromagnet() {
        assert!((ff_energy(8, 0.0).unwrap() + 8.0).abs() < 1e-12);
        assert!((ed_ground_state(8, 1.0, 0.0).unwrap().0 + 8.0).abs() < 1e-10);
    }

    #[test]
    fn strong_field_limit() {
        let s = ed_solve(8, 1.0, 100.0).unwrap();
        assert!((s.per_site + 100.0).abs() < 1.0);
    }

    #[test]
    fn thermodynamic_limit() {
        let e = ff_energy(4096, 1.0).unwrap() / 4096.0;
        assert!((e + 4.0 / PI).abs() < 1e-4);
    }

    #[test]
    fn odd_lengths_rejected() {
        assert!(ff_energy(7, 1.0).is_err());
        assert!(ed_ground_state(17, 1.0, 1.0).is_err());
    }

    #[test]
    fn correlations_depend_on_separation_only() {
        let s = ed_solve(10, 1.0, 1.0).unwrap();
        let xx = s.xx.unwrap();
        for a in 0..10 {
            for b in 0..10 {
                let d = (a as i64 - b as i64).rem_euclid(10) as usize;
                let d = d.min(10 - d);
                assert!((xx[a][b] - xx[0][d]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn covariance_energy_matches_formula() {
        for (l, g) in [(8, 1.0), (16, 0.7), (32, 1.3)] {
            let gamma = ff_covariance(l, g).unwrap();
            // E = sum over terms i c g_a g_b with <g_a g_b> = -i Gamma_ab
            let mut e = 0.0;
            for s in 0..l {
                e += g * gamma[(2 * s, 2 * s + 1)];
                if s + 1 < l {
                    e += gamma[(2 * s + 1, 2 * s + 2)];
                } else {
                    e -= gamma[(2 * s + 1, 0)];
                }
            }
            assert!((e - ff_energy(l, g).unwrap()).abs() < 1e-10, "L={l} g={g}");
        }
    }

    #[test]
    fn covariance_entropy_matches_ed() {
        for l in [6, 8, 10] {
            let (_, psi) = ed_ground_state(l, 1.0, 1.0).unwrap();
            let psi: Vec<C64> = psi.iter().map(|&x| C64::new(x, 0.0)).collect();
            for cut in [1, l / 2] {
                let ed = dense_entropy(l, &psi, cut);
                let ff = ff_entropy(l, 1.0, cut).unwrap();
                assert!((ed - ff).abs() < 1e-9, "L={l} cut={cut}: {ed} vs {ff}");
            }
        }
    }
}
