//! Energy minimisation over the network angles.
//!
//! A limited-memory BFGS loop (two-loop recursion, strong Wolfe line search)
//! drives the adjoint energy gradient. The parameter-shift rule and central
//! finite differences are kept as independent checks of that gradient.

use std::collections::VecDeque;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mera::{build_mera, param_count, EnergyEngine, MeraConfig, MeraNetwork};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    /// Reverse pass through the reduced density matrices.
    #[default]
    Adjoint,
    /// `[E(t + pi/2) - E(t - pi/2)] / 2` per angle.
    ShiftRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_halt")]
    pub halt_rel_energy: f64,
    #[serde(default)]
    pub seed: u64,
    /// Initial angles are uniform in `[-init_range, init_range]`.
    #[serde(default = "default_init")]
    pub init_range: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_memory")]
    pub memory: usize,
    #[serde(default)]
    pub gradient: GradientMethod,
}

fn default_max_iters() -> usize {
    2000
}
fn default_halt() -> f64 {
    1e-8
}
fn default_init() -> f64 {
    0.1
}
fn default_restarts() -> usize {
    3
}
fn default_memory() -> usize {
    10
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            max_iters: default_max_iters(),
            halt_rel_energy: default_halt(),
            seed: 0,
            init_range: default_init(),
            restarts: default_restarts(),
            memory: default_memory(),
            gradient: GradientMethod::Adjoint,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.halt_rel_energy > 0.0) {
            return Err(Error::Config("halt_rel_energy must be positive".into()));
        }
        if !(self.init_range >= 0.0) || !self.init_range.is_finite() {
            return Err(Error::Config("init_range must be a finite non-negative number".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if self.memory == 0 {
            return Err(Error::Config("memory must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub params: Vec<f64>,
    pub energy: f64,
    pub trace: Vec<TracePoint>,
    pub converged: bool,
    /// Which restart produced `params`.
    pub restart: usize,
    pub wall_time_s: f64,
    /// Why the winning run stopped.
    pub stop: StopReason,
}

impl OptResult {
    pub fn energy_trace(&self) -> Vec<(usize, f64)> {
        self.trace.iter().map(|t| (t.iter, t.energy)).collect()
    }

    pub fn grad_norm_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|t| t.grad_norm).collect()
    }

    /// `iter,energy,grad_norm` rows with a header.
    pub fn trace_csv(&self) -> String {
        trace_csv(&self.trace)
    }
}

pub fn trace_csv(trace: &[TracePoint]) -> String {
    let mut s = String::from("iter,energy,grad_norm\n");
    for t in trace {
        s.push_str(&format!("{},{:.17e},{:.17e}\n", t.iter, t.energy, t.grad_norm));
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    RelativeEnergy,
    ZeroGradient,
    MaxIters,
    LineSearch,
}

/// Energy gradient of `net` with the chosen backend.
pub fn gradient(net: &MeraNetwork, method: GradientMethod) -> Result<Vec<f64>> {
    match method {
        GradientMethod::Adjoint => Ok(EnergyEngine::new(net)?.energy_and_gradient(net)?.1),
        GradientMethod::ShiftRule => shift_rule_gradient(net),
    }
}

fn energy_at(engine: &EnergyEngine, net: &MeraNetwork, params: &[f64]) -> Result<f64> {
    engine.energy(&net.with_params(params)?)
}

/// Parameter-shift gradient; exact because every generator squares to one.
pub fn shift_rule_gradient(net: &MeraNetwork) -> Result<Vec<f64>> {
    let engine = EnergyEngine::new(net)?;
    let base = net.params().to_vec();
    let s = std::f64::consts::FRAC_PI_2;
    (0..base.len())
        .into_par_iter()
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + s;
            let up = energy_at(&engine, net, &p)?;
            p[i] = base[i] - s;
            let down = energy_at(&engine, net, &p)?;
            Ok((up - down) / 2.0)
        })
        .collect()
}

/// Central differences with step `h`.
pub fn finite_difference_gradient(net: &MeraNetwork, h: f64) -> Result<Vec<f64>> {
    let engine = EnergyEngine::new(net)?;
    let base = net.params().to_vec();
    (0..base.len())
        .into_par_iter()
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + h;
            let up = energy_at(&engine, net, &p)?;
            p[i] = base[i] - h;
            let down = energy_at(&engine, net, &p)?;
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct LbfgsSettings {
    pub max_iters: usize,
    pub halt_rel: f64,
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_evals_per_search: usize,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        LbfgsSettings { max_iters: 1000, halt_rel: 1e-8, memory: 10, c1: 1e-4, c2: 0.9, max_evals_per_search: 30 }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub trace: Vec<TracePoint>,
    pub stop: StopReason,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        matches!(self.stop, StopReason::RelativeEnergy | StopReason::ZeroGradient)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(x: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + a * di).collect()
}

struct Point {
    a: f64,
    f: f64,
    d: f64,
    g: Vec<f64>,
}

/// Minimiser of the cubic through two points with values and slopes, or
/// bisection when that minimiser is not usable.
fn cubic_min(lo: &Point, hi: &Point) -> f64 {
    let (a0, a1) = (lo.a, hi.a);
    let d1 = lo.d + hi.d - 3.0 * (lo.f - hi.f) / (a0 - a1);
    let disc = d1 * d1 - lo.d * hi.d;
    let mid = 0.5 * (a0 + a1);
    if disc < 0.0 {
        return mid;
    }
    let d2 = (a1 - a0).signum() * disc.sqrt();
    let t = a1 - (a1 - a0) * (hi.d + d2 - d1) / (hi.d - lo.d + 2.0 * d2);
    let (l, h) = if a0 < a1 { (a0, a1) } else { (a1, a0) };
    let margin = 0.1 * (h - l);
    if !t.is_finite() || t < l + margin || t > h - margin {
        mid
    } else {
        t
    }
}

/// Strong Wolfe search along `dir`; `None` when no acceptable step is found.
fn line_search<F>(
    f: &mut F,
    x: &[f64],
    f0: f64,
    d0: f64,
    dir: &[f64],
    a_init: f64,
    s: &LbfgsSettings,
) -> Result<Option<Point>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut eval = |a: f64| -> Result<Point> {
        let (fv, g) = f(&axpy(x, a, dir))?;
        let d = dot(&g, dir);
        Ok(Point { a, f: fv, d, g })
    };
    let zero = Point { a: 0.0, f: f0, d: d0, g: Vec::new() };
    let mut prev = zero;
    let mut a = a_init;
    let mut evals = 0;
    let armijo = |p: &Point| p.f <= f0 + s.c1 * p.a * d0 && p.f.is_finite();
    let curvature = |p: &Point| p.d.abs() <= -s.c2 * d0;
    let (mut lo, mut hi);
    loop {
        let p = eval(a)?;
        evals += 1;
        if !armijo(&p) || (evals > 1 && p.f >= prev.f) {
            lo = prev;
            hi = p;
            break;
        }
        if curvature(&p) {
            return Ok(Some(p));
        }
        if p.d >= 0.0 {
            lo = p;
            hi = prev;
            break;
        }
        if evals >= s.max_evals_per_search {
            return Ok(None);
        }
        prev = p;
        a *= 2.0;
    }
    // zoom
    while evals < s.max_evals_per_search {
        if !hi.f.is_finite() {
            // no slope information at a non-finite point
            let a = 0.5 * (lo.a + hi.a);
            let p = eval(a)?;
            evals += 1;
            hi = p;
            continue;
        }
        let a = cubic_min(&lo, &hi);
        if (hi.a - lo.a).abs() < 1e-16 * lo.a.abs().max(1.0) {
            break;
        }
        let p = eval(a)?;
        evals += 1;
        if !armijo(&p) || p.f >= lo.f {
            hi = p;
        } else {
            if curvature(&p) {
                return Ok(Some(p));
            }
            if p.d * (hi.a - lo.a) >= 0.0 {
                hi = std::mem::replace(&mut lo, p);
            } else {
                lo = p;
            }
        }
    }
    // accept a sufficiently decreasing point even without the curvature test
    if lo.a > 0.0 && lo.f < f0 {
        return Ok(Some(lo));
    }
    Ok(None)
}

/// L-BFGS. `on_iter` sees every accepted iterate and its trace entry.
pub fn lbfgs<F, C>(mut f: F, x0: Vec<f64>, s: &LbfgsSettings, mut on_iter: C) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    C: FnMut(&[f64], &TracePoint) -> Result<()>,
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() {
        return Err(Error::Numerical("objective is not finite at the starting point".into()));
    }
    let mut trace = vec![TracePoint { iter: 0, energy: fx, grad_norm: norm(&g) }];
    on_iter(&x, &trace[0])?;
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut stop = StopReason::MaxIters;
    for it in 1..=s.max_iters {
        let gn = norm(&g);
        if gn == 0.0 {
            stop = StopReason::ZeroGradient;
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (sv, yv, rho) in hist.iter().rev() {
            let a = rho * dot(sv, &q);
            for (qi, yi) in q.iter_mut().zip(yv) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((sv, yv, _)) = hist.back() {
            let gamma = dot(sv, yv) / dot(yv, yv);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((sv, yv, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(yv, &q);
            for (qi, si) in q.iter_mut().zip(sv) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut d0 = dot(&g, &dir);
        if !(d0 < 0.0) {
            hist.clear();
            dir = g.iter().map(|v| -v).collect();
            d0 = -gn * gn;
        }
        let a_init = if hist.is_empty() { (1.0 / gn).min(1.0) } else { 1.0 };
        let Some(p) = line_search(&mut f, &x, fx, d0, &dir, a_init, s)? else {
            stop = StopReason::LineSearch;
            break;
        };
        let x_new = axpy(&x, p.a, &dir);
        let sv: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&sv, &yv);
        if sy > 1e-300 {
            if hist.len() == s.memory {
                hist.pop_front();
            }
            hist.push_back((sv, yv, 1.0 / sy));
        }
        let f_old = fx;
        x = x_new;
        fx = p.f;
        g = p.g;
        let tp = TracePoint { iter: it, energy: fx, grad_norm: norm(&g) };
        on_iter(&x, &tp)?;
        trace.push(tp);
        if (fx - f_old).abs() < s.halt_rel * fx.abs().max(f64::MIN_POSITIVE) {
            stop = StopReason::RelativeEnergy;
            break;
        }
    }
    Ok(Minimum { x, f: fx, trace, stop })
}

/// Progress report handed to [`optimize_with`] observers.
pub struct Progress<'a> {
    pub restart: usize,
    pub params: &'a [f64],
    pub point: &'a TracePoint,
}

/// Seeded initial angles for one restart.
pub fn initial_params(cfg: &MeraConfig, opt: &OptConfig, restart: usize) -> Result<Vec<f64>> {
    use rand::Rng;
    let n = param_count(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    rng.set_stream(restart as u64);
    let r = opt.init_range;
    Ok((0..n).map(|_| if r == 0.0 { 0.0 } else { rng.gen_range(-r..=r) }).collect())
}

pub fn optimize(cfg: &MeraConfig, opt: &OptConfig) -> Result<OptResult> {
    optimize_with(cfg, opt, |_| Ok(()))
}

/// Best of `opt.restarts` seeded L-BFGS runs.
pub fn optimize_with<C>(cfg: &MeraConfig, opt: &OptConfig, mut observer: C) -> Result<OptResult>
where
    C: FnMut(&Progress) -> Result<()>,
{
    cfg.validate()?;
    opt.validate()?;
    let start = Instant::now();
    let template = build_mera(cfg, vec![0.0; param_count(cfg)?])?;
    let engine = EnergyEngine::new(&template)?;
    let settings = LbfgsSettings {
        max_iters: opt.max_iters,
        halt_rel: opt.halt_rel_energy,
        memory: opt.memory,
        ..LbfgsSettings::default()
    };
    let mut best: Option<(usize, Minimum)> = None;
    for r in 0..opt.restarts {
        let x0 = initial_params(cfg, opt, r)?;
        let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let net = template.with_params(x)?;
            match opt.gradient {
                GradientMethod::Adjoint => engine.energy_and_gradient(&net),
                GradientMethod::ShiftRule => Ok((engine.energy(&net)?, shift_rule_gradient(&net)?)),
            }
        };
        let m = lbfgs(objective, x0, &settings, |x, tp| observer(&Progress { restart: r, params: x, point: tp }))?;
        if best.as_ref().is_none_or(|(_, b)| m.f < b.f) {
            best = Some((r, m));
        }
    }
    let (restart, m) = best.expect("at least one restart");
    Ok(OptResult {
        converged: m.converged(),
        energy: m.f,
        params: m.x,
        trace: m.trace,
        restart,
        wall_time_s: start.elapsed().as_secs_f64(),
        stop: m.stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_step_stays_inside() {
        let lo = Point { a: 0.0, f: 1.0, d: -1.0, g: vec![] };
        let hi = Point { a: 1.0, f: 1.0, d: 1.0, g: vec![] };
        let t = cubic_min(&lo, &hi);
        assert!((t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Ok((v, g))
        };
        let s = LbfgsSettings { halt_rel: 1e-30, max_iters: 500, ..Default::default() };
        let m = lbfgs(f, vec![-1.2, 1.0], &s, |_, _| Ok(())).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?} {:?}", m.x, m.stop);
        for w in m.trace.windows(2) {
            assert!(w[1].energy <= w[0].energy);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let o = OptConfig { halt_rel_energy: 0.0, ..Default::default() };
        assert!(o.validate().is_err());
        let o = OptConfig { restarts: 0, ..Default::default() };
        assert!(o.validate().is_err());
    }
}
