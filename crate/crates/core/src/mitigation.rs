//! Symmetry post-selection, correlator estimates, linear zero-noise
//! extrapolation, shot allocation and bootstrap error bars.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::Role;
use crate::simulator::ShotTable;
use crate::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_total: usize,
    pub n_kept: usize,
    pub noise_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZneResult {
    pub e0: f64,
    pub sigma0: f64,
    pub e1: Estimate,
    pub em: Estimate,
    pub m: f64,
}

fn herald_columns(t: &ShotTable) -> Result<Vec<usize>> {
    let z = t.columns_with(Role::SiteZ);
    if z.len() != 2 {
        return Err(Error::InvalidInput(format!("expected two site_z columns, found {}", z.len())));
    }
    let mut cols = t.columns_with(Role::ConeExit);
    cols.extend(z);
    Ok(cols)
}

fn even(bits: &[u8], cols: &[usize]) -> bool {
    cols.iter().fold(0u8, |acc, &i| acc ^ bits[i]) == 0
}

/// Keeps the shots whose cone-exit and site bits have even total parity.
/// Returns the kept table and the discard rate.
pub fn postselect(t: &ShotTable) -> Result<(ShotTable, f64)> {
    let cols = herald_columns(t)?;
    let kept: Vec<Vec<u8>> = t.shots.iter().filter(|s| even(s, &cols)).cloned().collect();
    let rate = if t.is_empty() { 0.0 } else { 1.0 - kept.len() as f64 / t.len() as f64 };
    Ok((t.with_shots(kept), rate))
}

/// Mean of the herald parity (+1 even, -1 odd); the kept fraction is
/// `(1 + mean) / 2`.
pub fn parity_mean(t: &ShotTable) -> Result<f64> {
    let cols = herald_columns(t)?;
    if t.is_empty() {
        return Err(Error::EmptyEstimate);
    }
    let s: f64 = t.shots.iter().map(|b| if even(b, &cols) { 1.0 } else { -1.0 }).sum();
    Ok(s / t.len() as f64)
}

fn ancilla_column(t: &ShotTable) -> Result<usize> {
    match t.columns_with(Role::XxAncilla)[..] {
        [a] => Ok(a),
        _ => Err(Error::InvalidInput("shot table needs exactly one xx_ancilla column".into())),
    }
}

/// Mean and standard error of `(-1)^b` over the given ancilla bits.
pub fn mean_sign(bits: impl Iterator<Item = u8>) -> Result<(f64, f64, usize)> {
    let (mut n, mut ones) = (0usize, 0usize);
    for b in bits {
        n += 1;
        ones += b as usize;
    }
    if n == 0 {
        return Err(Error::EmptyEstimate);
    }
    let nf = n as f64;
    let mean = (nf - 2.0 * ones as f64) / nf;
    // sample variance of +-1 values
    let var = if n > 1 { (1.0 - mean * mean) * nf / (nf - 1.0) } else { 0.0 };
    Ok((mean, (var.max(0.0) / nf).sqrt(), n))
}

/// `<X_j X_k>` from the ancilla bit of every shot in the table.
pub fn estimate_xx(t: &ShotTable) -> Result<Estimate> {
    let a = ancilla_column(t)?;
    let (value, stderr, n) = mean_sign(t.shots.iter().map(|s| s[a]))?;
    Ok(Estimate { value, stderr, n_total: n, n_kept: n, noise_scale: t.meta.noise_scale * t.meta.fold as f64 })
}

/// Post-selects, then estimates; `n_total` counts the raw shots.
pub fn heralded_xx(t: &ShotTable) -> Result<Estimate> {
    let (kept, _) = postselect(t)?;
    let mut e = estimate_xx(&kept)?;
    e.n_total = t.len();
    Ok(e)
}

pub fn zne(e1: &Estimate, em: &Estimate, m: f64) -> Result<ZneResult> {
    if !(m > 1.0) || !m.is_finite() {
        return Err(Error::InvalidInput(format!("extrapolation factor must exceed 1, got {m}")));
    }
    let (e0, sigma0) = zne_value(e1.value, e1.stderr, em.value, em.stderr, m);
    Ok(ZneResult { e0, sigma0, e1: *e1, em: *em, m })
}

/// Linear extrapolation from scales 1 and `m` with propagated error.
pub fn zne_value(v1: f64, s1: f64, vm: f64, sm: f64, m: f64) -> (f64, f64) {
    let e0 = (m * v1 - vm) / (m - 1.0);
    let sigma0 = (m * m * s1 * s1 + sm * sm).sqrt() / (m - 1.0);
    (e0, sigma0)
}

/// Splits a shot budget as `N1 : Nm = m^2 : 1`, so that both scales
/// contribute equally to the extrapolation error when their per-shot
/// variances match. (The variance-optimal split would be `m : 1`.)
pub fn allocate_shots(total: usize, m: usize) -> Result<(usize, usize)> {
    if m < 2 {
        return Err(Error::InvalidInput(format!("extrapolation factor must exceed 1, got {m}")));
    }
    let m2 = m * m;
    if total < m2 + 1 {
        return Err(Error::InvalidInput(format!("{total} shots cannot be split {m2}:1")));
    }
    let n1 = (total * m2 + (m2 + 1) / 2) / (m2 + 1);
    Ok((n1, total - n1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub mean: f64,
    pub std: f64,
    /// 15.87 and 84.13 percentiles of the resampled statistic.
    pub lo: f64,
    pub hi: f64,
    pub n_resamples: usize,
    /// Resamples on which the statistic was undefined (e.g. nothing kept).
    pub n_failed: usize,
}

impl BootstrapResult {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Resamples each of several data sets with replacement (sizes given) and
/// evaluates `stat` on the drawn index lists. Resample `i` draws from the
/// ChaCha stream `(seed, i)`.
pub fn bootstrap_indices<F>(sizes: &[usize], n_resamples: usize, seed: u64, stat: F) -> Result<BootstrapResult>
where
    F: Fn(&[Vec<usize>]) -> Option<f64> + Sync,
{
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::InvalidInput("bootstrap needs non-empty data".into()));
    }
    if n_resamples == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least one resample".into()));
    }
    let vals: Vec<Option<f64>> = (0..n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let idx: Vec<Vec<usize>> = sizes.iter().map(|&n| (0..n).map(|_| rng.gen_range(0..n)).collect()).collect();
            stat(&idx)
        })
        .collect();
    let mut ok: Vec<f64> = vals.iter().flatten().copied().collect();
    let n_failed = n_resamples - ok.len();
    if ok.is_empty() {
        return Err(Error::EmptyEstimate);
    }
    let n = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / n;
    let var = if ok.len() > 1 { ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    ok.sort_by(f64::total_cmp);
    Ok(BootstrapResult {
        mean,
        std: var.sqrt(),
        lo: percentile(&ok, 0.158_655_253_931_457_05),
        hi: percentile(&ok, 0.841_344_746_068_542_9),
        n_resamples,
        n_failed,
    })
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let x = q * (sorted.len() - 1) as f64;
    let (i, f) = (x.floor() as usize, x.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

/// Bootstrap of any statistic of one data set.
pub fn bootstrap<T, F>(data: &[T], n_resamples: usize, seed: u64, stat: F) -> Result<BootstrapResult>
where
    T: Sync,
    F: Fn(&[&T]) -> Option<f64> + Sync,
{
    bootstrap_indices(&[data.len()], n_resamples, seed, |idx| {
        let draw: Vec<&T> = idx[0].iter().map(|&i| &data[i]).collect();
        stat(&draw)
    })
}

/// Heralded XX of a table restricted to the given shots.
fn heralded_xx_of(t: &ShotTable, cols: &[usize], anc: usize, idx: &[usize]) -> Option<(f64, f64)> {
    let kept = idx.iter().map(|&i| &t.shots[i]).filter(|s| even(s, cols));
    mean_sign(kept.map(|s| s[anc])).ok().map(|(v, e, _)| (v, e))
}

/// Full-pipeline bootstrap: raw shots of both scales are resampled, then
/// post-selected and extrapolated inside every resample.
pub fn bootstrap_zne(t1: &ShotTable, tm: &ShotTable, m: f64, n_resamples: usize, seed: u64) -> Result<BootstrapResult> {
    let (c1, a1) = (herald_columns(t1)?, ancilla_column(t1)?);
    let (cm, am) = (herald_columns(tm)?, ancilla_column(tm)?);
    bootstrap_indices(&[t1.len(), tm.len()], n_resamples, seed, |idx| {
        let (v1, _) = heralded_xx_of(t1, &c1, a1, &idx[0])?;
        let (vm, _) = heralded_xx_of(tm, &cm, am, &idx[1])?;
        Some(zne_value(v1, 0.0, vm, 0.0, m).0)
    })
}

/// Bootstrap of the heralded estimate of a single table.
pub fn bootstrap_heralded(t: &ShotTable, n_resamples: usize, seed: u64) -> Result<BootstrapResult> {
    let (c, a) = (herald_columns(t)?, ancilla_column(t)?);
    bootstrap_indices(&[t.len()], n_resamples, seed, |idx| heralded_xx_of(t, &c, a, &idx[0]).map(|v| v.0))
}

/// Estimates at one separation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub distance: usize,
    pub j: usize,
    pub k: usize,
    pub raw: Estimate,
    pub heralded: Estimate,
    pub zne: ZneResult,
    pub discard_rate_1: f64,
    pub discard_rate_m: f64,
    pub bootstrap: Option<BootstrapResult>,
}

impl DistanceRecord {
    /// Error bar of the mitigated value: bootstrap spread when available.
    pub fn stderr(&self) -> f64 {
        self.bootstrap.map_or(self.zne.sigma0, |b| b.std)
    }
}

/// Raw, heralded and extrapolated estimates from the two shot tables.
pub fn mitigate(distance: usize, j: usize, k: usize, t1: &ShotTable, tm: &ShotTable, m: f64) -> Result<DistanceRecord> {
    let raw = estimate_xx(t1)?;
    let (_, discard_rate_1) = postselect(t1)?;
    let (_, discard_rate_m) = postselect(tm)?;
    let heralded = heralded_xx(t1)?;
    let hm = heralded_xx(tm)?;
    let zne = zne(&heralded, &hm, m)?;
    Ok(DistanceRecord { distance, j, k, raw, heralded, zne, discard_rate_1, discard_rate_m, bootstrap: None })
}

/// One row per distance: `distance, raw, heralded, zne, stderr` followed by
/// the individual error bars and discard rates.
pub fn records_csv(rows: &[DistanceRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "distance",
        "raw",
        "heralded",
        "zne",
        "stderr",
        "raw_stderr",
        "heralded_stderr",
        "zne_sigma0",
        "discard_rate_1",
        "discard_rate_m",
        "n_total_1",
        "n_total_m",
        "j",
        "k",
    ])?;
    for r in rows {
        w.write_record([
            r.distance.to_string(),
            fmt(r.raw.value),
            fmt(r.heralded.value),
            fmt(r.zne.e0),
            fmt(r.stderr()),
            fmt(r.raw.stderr),
            fmt(r.heralded.stderr),
            fmt(r.zne.sigma0),
            fmt(r.discard_rate_1),
            fmt(r.discard_rate_m),
            r.zne.e1.n_total.to_string(),
            r.zne.em.n_total.to_string(),
            r.j.to_string(),
            r.k.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("ascii"))
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:e}")
}
