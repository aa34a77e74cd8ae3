//! Power-law fits of the correlation decay and the final report.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compiler::ResourceStats;
use crate::mera::MeraNetwork;
use crate::mitigation::{fmt, DistanceRecord, Estimate};
use crate::simulator::NoiseModel;
use crate::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Published schema of `report.json`.
pub const REPORT_SCHEMA: &str = include_str!("../schemas/report.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Chisq,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub eta: f64,
    pub eta_err: f64,
    pub amplitude: f64,
    pub method: FitMethod,
    /// `ln C - ln(A r^-eta)` at each fitted distance.
    pub residuals: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub chisq: FitResult,
    pub bootstrap: FitResult,
    pub chi2: f64,
    pub used: Vec<usize>,
    /// Distances left out and why.
    pub excluded: Vec<(usize, String)>,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub resamples: usize,
    pub seed: u64,
    /// Distances below this are reported but not fitted.
    pub min_distance: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { resamples: crate::mitigation::DEFAULT_RESAMPLES, seed: 0, min_distance: 2 }
    }
}

struct Line {
    slope: f64,
    intercept: f64,
    slope_err: f64,
    chi2: f64,
}

/// Weighted least squares of `y = a + b x`.
fn weighted_line(x: &[f64], y: &[f64], sigma: &[f64]) -> Line {
    let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    let s: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let d = s * sxx - sx * sx;
    let slope = (s * sxy - sx * sy) / d;
    let intercept = (sxx * sy - sx * sxy) / d;
    let chi2 = x.iter().zip(y).zip(&w).map(|((x, y), w)| w * (y - intercept - slope * x).powi(2)).sum();
    Line { slope, intercept, slope_err: (s / d).sqrt(), chi2 }
}

/// Fits `C(r) = A r^-eta` to the positive estimates at `r >= min_distance`.
pub fn fit_power_law(points: &[(usize, Estimate)], opts: &FitOptions) -> Result<PowerLawFit> {
    let mut used = Vec::new();
    let mut excluded = Vec::new();
    for &(r, e) in points {
        if r < opts.min_distance.max(1) {
            excluded.push((r, format!("distance below {}", opts.min_distance.max(1))));
        } else if !(e.value > 0.0) || !e.value.is_finite() {
            excluded.push((r, format!("non-positive value {}", e.value)));
        } else {
            used.push((r, e));
        }
    }
    if used.len() < 3 {
        return Err(Error::InvalidInput(format!("power-law fit needs 3 usable distances, have {}", used.len())));
    }
    let x: Vec<f64> = used.iter().map(|(r, _)| (*r as f64).ln()).collect();
    let y: Vec<f64> = used.iter().map(|(_, e)| e.value.ln()).collect();
    let rel: Vec<f64> = used.iter().map(|(_, e)| e.stderr / e.value).collect();
    let floor = rel.iter().copied().filter(|s| *s > 0.0).fold(f64::INFINITY, f64::min);
    let weighted = floor.is_finite();
    let sigma: Vec<f64> = rel.iter().map(|&s| if !weighted { 1.0 } else if s > 0.0 { s } else { floor }).collect();
    let line = weighted_line(&x, &y, &sigma);
    let slope_err = if weighted {
        line.slope_err
    } else {
        // unit weights: scale by the residual variance
        let dof = (x.len() - 2) as f64;
        line.slope_err * (line.chi2 / dof).sqrt()
    };
    let residuals = |intercept: f64, slope: f64| -> Vec<(usize, f64)> {
        used.iter().zip(x.iter().zip(&y)).map(|((r, _), (x, y))| (*r, y - intercept - slope * x)).collect()
    };
    let chisq = FitResult {
        eta: -line.slope,
        eta_err: slope_err,
        amplitude: line.intercept.exp(),
        method: FitMethod::Chisq,
        residuals: residuals(line.intercept, line.slope),
    };

    // resample every point from a normal with its error bar and refit
    let draws: Vec<Option<(f64, f64)>> = (0..opts.resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            let mut yy = Vec::with_capacity(used.len());
            for (_, e) in &used {
                let z: f64 = StandardNormal.sample(&mut rng);
                let v = e.value + e.stderr * z;
                if v <= 0.0 {
                    return None;
                }
                yy.push(v.ln());
            }
            let l = weighted_line(&x, &yy, &sigma);
            Some((l.slope, l.intercept))
        })
        .collect();
    let ok: Vec<(f64, f64)> = draws.into_iter().flatten().collect();
    let bootstrap = if ok.len() >= 2 {
        let n = ok.len() as f64;
        let mean = ok.iter().map(|p| -p.0).sum::<f64>() / n;
        let var = ok.iter().map(|p| (-p.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let icpt = ok.iter().map(|p| p.1).sum::<f64>() / n;
        FitResult {
            eta: mean,
            eta_err: var.sqrt(),
            amplitude: icpt.exp(),
            method: FitMethod::Bootstrap,
            residuals: residuals(icpt, -mean),
        }
    } else {
        FitResult { method: FitMethod::Bootstrap, eta_err: 0.0, ..chisq.clone() }
    };
    Ok(PowerLawFit { chisq, bootstrap, chi2: line.chi2, used: used.iter().map(|p| p.0).collect(), excluded })
}

/// Exact estimates (zero error bars) from plain values.
pub fn exact_points(values: &[(usize, f64)]) -> Vec<(usize, Estimate)> {
    values.iter().map(|&(r, value)| (r, Estimate { value, stderr: 0.0, n_total: 0, n_kept: 0, noise_scale: 0.0 })).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscardEntry {
    pub distance: usize,
    pub scale_1: f64,
    pub scale_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportPoint {
    pub distance: usize,
    pub j: usize,
    pub k: usize,
    pub noiseless: f64,
    pub raw: f64,
    pub heralded: f64,
    pub zne: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub layout_version: u32,
    pub config_hash: String,
    pub network_hash: String,
    pub l: usize,
    pub chi: usize,
    pub m: usize,
    pub placement: String,
    pub noise: NoiseModel,
    pub eta: f64,
    pub eta_err: f64,
    pub eta_bootstrap: f64,
    pub eta_bootstrap_err: f64,
    pub eta_noiseless: f64,
    pub eta_raw: f64,
    pub energy: f64,
    pub energy_exact: f64,
    pub energy_err: f64,
    pub energy_per_site: f64,
    pub discard_rates: Vec<DiscardEntry>,
    pub resource_stats: Vec<ResourceStats>,
    pub points: Vec<ReportPoint>,
    pub excluded: Vec<usize>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Parses and checks a report against the schema: every field present,
    /// no extra keys, consistent counts.
    pub fn validate_json(s: &str) -> Result<Report> {
        let r: Report = serde_json::from_str(s)?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!("unknown report schema version {}", r.schema_version)));
        }
        if r.discard_rates.len() != r.points.len() {
            return Err(Error::InvalidInput("discard_rates and points differ in length".into()));
        }
        if !(r.eta_err >= 0.0 && r.eta_bootstrap_err >= 0.0) {
            return Err(Error::InvalidInput("negative error bar".into()));
        }
        Ok(r)
    }
}

/// Inputs the report is assembled from.
pub struct ReportInputs<'a> {
    pub config_hash: String,
    pub network: &'a MeraNetwork,
    pub energy: f64,
    pub energy_exact: f64,
    pub m: usize,
    pub placement: String,
    pub noise: NoiseModel,
    pub records: &'a [DistanceRecord],
    /// Noiseless correlator at each record's pair.
    pub noiseless: &'a [f64],
    pub resources: Vec<ResourceStats>,
    pub fit: FitOptions,
}

/// Mitigated, raw and noiseless fits plus all bookkeeping.
pub fn report(inp: &ReportInputs) -> Result<Report> {
    if inp.records.is_empty() {
        return Err(Error::MissingArtifact("no per-distance records".into()));
    }
    if inp.noiseless.len() != inp.records.len() {
        return Err(Error::InvalidInput("one noiseless value per record is required".into()));
    }
    let mitigated: Vec<(usize, Estimate)> = inp
        .records
        .iter()
        .map(|r| (r.distance, Estimate { value: r.zne.e0, stderr: r.stderr(), ..r.heralded }))
        .collect();
    let raw: Vec<(usize, Estimate)> = inp.records.iter().map(|r| (r.distance, r.raw)).collect();
    let clean: Vec<(usize, f64)> = inp.records.iter().zip(inp.noiseless).map(|(r, &v)| (r.distance, v)).collect();
    let fit = fit_power_law(&mitigated, &inp.fit)?;
    let fit_raw = fit_power_law(&raw, &inp.fit)?;
    let fit_clean = fit_power_law(&exact_points(&clean), &inp.fit)?;
    let cfg = inp.network.config();
    let doc = inp.network.to_json()?;
    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        layout_version: crate::mera::LAYOUT_VERSION,
        config_hash: inp.config_hash.clone(),
        network_hash: hash_hex(doc.as_bytes()),
        l: cfg.l,
        chi: cfg.chi,
        m: inp.m,
        placement: inp.placement.clone(),
        noise: inp.noise,
        eta: fit.chisq.eta,
        eta_err: fit.chisq.eta_err,
        eta_bootstrap: fit.bootstrap.eta,
        eta_bootstrap_err: fit.bootstrap.eta_err,
        eta_noiseless: fit_clean.chisq.eta,
        eta_raw: fit_raw.chisq.eta,
        energy: inp.energy,
        energy_exact: inp.energy_exact,
        energy_err: ((inp.energy - inp.energy_exact) / inp.energy_exact).abs(),
        energy_per_site: inp.energy / cfg.l as f64,
        discard_rates: inp
            .records
            .iter()
            .map(|r| DiscardEntry { distance: r.distance, scale_1: r.discard_rate_1, scale_m: r.discard_rate_m })
            .collect(),
        resource_stats: inp.resources.clone(),
        points: inp
            .records
            .iter()
            .zip(inp.noiseless)
            .map(|(r, &n)| ReportPoint {
                distance: r.distance,
                j: r.j,
                k: r.k,
                noiseless: n,
                raw: r.raw.value,
                heralded: r.heralded.value,
                zne: r.zne.e0,
                stderr: r.stderr(),
            })
            .collect(),
        excluded: fit.excluded.iter().map(|e| e.0).collect(),
    })
}

/// First 16 hex digits of the SHA-256 of some bytes.
pub fn hash_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(&Sha256::digest(bytes)[..8])
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("ascii"))
}

/// Correlation decay table: noiseless, raw, heralded and mitigated values.
pub fn fig3_csv(rep: &Report) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["distance", "noiseless", "raw", "heralded", "zne", "stderr", "in_fit"])?;
    for p in &rep.points {
        w.write_record([
            p.distance.to_string(),
            fmt(p.noiseless),
            fmt(p.raw),
            fmt(p.heralded),
            fmt(p.zne),
            fmt(p.stderr),
            (!rep.excluded.contains(&p.distance)).to_string(),
        ])?;
    }
    finish(w)
}

/// Kept fraction `(1 + <parity>)/2` per distance and noise scale.
pub fn parity_csv(rep: &Report) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["distance", "scale", "kept_fraction", "discard_rate"])?;
    for d in &rep.discard_rates {
        for (scale, rate) in [(1, d.scale_1), (rep.m, d.scale_m)] {
            w.write_record([d.distance.to_string(), scale.to_string(), fmt(1.0 - rate), fmt(rate)])?;
        }
    }
    finish(w)
}

/// Histogram of |angle| of all XX and YY entanglers, angles wrapped to
/// `[0, pi/2]` as seen by the gate error model.
pub fn angles_hist_csv(net: &MeraNetwork, bins: usize) -> Result<String> {
    let bins = bins.max(1);
    let width = std::f64::consts::FRAC_PI_2 / bins as f64;
    let mut counts = vec![[0usize; 2]; bins];
    for (n, &i) in net.entangler_param_positions().iter().enumerate() {
        let a = NoiseModel::effective_angle(net.params()[i]);
        let b = ((a / width) as usize).min(bins - 1);
        counts[b][n % 2] += 1;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin_lo", "bin_hi", "xx", "yy"])?;
    for (b, c) in counts.iter().enumerate() {
        w.write_record([fmt(b as f64 * width), fmt((b + 1) as f64 * width), c[0].to_string(), c[1].to_string()])?;
    }
    finish(w)
}

/// Median wrapped entangler angle.
pub fn median_entangler_angle(net: &MeraNetwork) -> f64 {
    let mut a: Vec<f64> =
        net.entangler_param_positions().iter().map(|&i| NoiseModel::effective_angle(net.params()[i])).collect();
    a.sort_by(f64::total_cmp);
    if a.is_empty() {
        return 0.0;
    }
    let n = a.len();
    if n % 2 == 1 {
        a[n / 2]
    } else {
        0.5 * (a[n / 2 - 1] + a[n / 2])
    }
}
