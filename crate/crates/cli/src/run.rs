//! File-based pipeline stages. Each stage reads the previous stage's files
//! from the output directory and writes its own; every file carries the
//! config hash (a `# config_hash=` first line for CSV and JSON-lines files,
//! a `config_hash` key for JSON).

use std::path::{Path, PathBuf};

use qmera_core::analysis::{self, hash_hex, FitOptions, Report, ReportInputs};
use qmera_core::circuits::{fold_zne, pair_circuit, Circuit};
use qmera_core::compiler::{compile_for_simulation, resource_csv, resource_stats, ResourceStats};
use qmera_core::mera::{build_mera, causal_cone, correlator_xx, EnergyEngine, MeraNetwork};
use qmera_core::mitigation::{allocate_shots, bootstrap_zne, mitigate, records_csv, DistanceRecord};
use qmera_core::mps;
use qmera_core::optimizer::{optimize_with, OptResult, StopReason};
use qmera_core::oracle;
use qmera_core::simulator::{run_shots_with, ShotOptions, ShotTable};
use qmera_core::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;

pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub hash: String,
}

/// Summary of the optimization stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptSummary {
    pub config_hash: String,
    pub network_hash: String,
    pub energy: f64,
    pub energy_exact: f64,
    pub rel_error: f64,
    pub converged: bool,
    pub stop: StopReason,
    pub restart: usize,
    pub iterations: usize,
}

/// Seed of one stochastic task, derived from the master seed.
pub fn derive_seed(seed: u64, tag: &str, a: usize, b: usize) -> u64 {
    u64::from_str_radix(&hash_hex(format!("{seed}/{tag}/{a}/{b}").as_bytes()), 16).expect("hex")
}

/// Exact ground energy of the configured chain.
pub fn exact_energy(cfg: &RunConfig) -> Result<f64> {
    let m = &cfg.mera;
    Ok(m.j * oracle::ff_energy(m.l, m.h / m.j)?)
}

fn tagged_text(hash: &str, body: &str) -> String {
    format!("# config_hash={hash}\n{body}")
}

fn tagged_json(hash: &str, v: Value) -> Result<String> {
    let mut v = match v {
        Value::Object(_) => v,
        items => json!({ "items": items }),
    };
    v["config_hash"] = Value::String(hash.into());
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

/// Config hash recorded in an artifact, if it exists and has one.
pub fn artifact_hash(path: &Path, key: &str) -> Option<String> {
    let text = std::fs::read_to_string(path).ok()?;
    if let Some(rest) = text.lines().next()?.strip_prefix("# config_hash=") {
        return (key == "config_hash").then(|| rest.trim().to_string());
    }
    let v: Value = serde_json::from_str(&text).ok()?;
    v.get(key)?.as_str().map(str::to_string)
}

impl Run {
    pub fn new(cfg: RunConfig, out: PathBuf) -> Result<Run> {
        cfg.validate()?;
        std::fs::create_dir_all(&out)?;
        let hash = cfg.hash();
        Ok(Run { cfg, out, hash })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn read(&self, name: &str) -> Result<String> {
        let p = self.path(name);
        std::fs::read_to_string(&p).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(p.display().to_string()),
            _ => Error::Io(e),
        })
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        // write-then-rename so an interrupted stage never leaves a partial file
        let tmp = self.path(&format!(".{name}.tmp"));
        std::fs::write(&tmp, text)?;
        std::fs::rename(tmp, self.path(name))?;
        Ok(())
    }

    fn write_text(&self, name: &str, body: &str) -> Result<()> {
        self.write(name, &tagged_text(&self.hash, body))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        self.write(name, &tagged_json(&self.hash, serde_json::to_value(value)?)?)
    }

    fn fresh(&self, names: &[String]) -> bool {
        names.iter().all(|n| artifact_hash(&self.path(n), "config_hash").as_deref() == Some(self.hash.as_str()))
    }

    pub fn write_config(&self) -> Result<()> {
        self.write_json("config.json", &self.cfg)
    }

    // optimize

    pub fn optimize(&self) -> Result<OptResult> {
        let cfg = &self.cfg;
        let every = cfg.checkpoint_every;
        let net_hash = cfg.network_hash();
        let res = optimize_with(&cfg.mera, &cfg.optimizer, |p| {
            if p.point.iter > 0 && p.point.iter % every == 0 {
                let net = build_mera(&cfg.mera, p.params.to_vec())?;
                self.write_network("network.checkpoint.json", &net, &net_hash)?;
            }
            Ok(())
        })?;
        let net = build_mera(&cfg.mera, res.params.clone())?;
        let exact = exact_energy(cfg)?;
        self.write_network("network.json", &net, &net_hash)?;
        self.write_text("opt_trace.csv", &res.trace_csv())?;
        self.write_json(
            "optimize.json",
            &OptSummary {
                config_hash: self.hash.clone(),
                network_hash: net_hash,
                energy: res.energy,
                energy_exact: exact,
                rel_error: ((res.energy - exact) / exact).abs(),
                converged: res.converged,
                stop: res.stop,
                restart: res.restart,
                iterations: res.trace.len().saturating_sub(1),
            },
        )?;
        let _ = std::fs::remove_file(self.path("network.checkpoint.json"));
        Ok(res)
    }

    fn write_network(&self, name: &str, net: &MeraNetwork, net_hash: &str) -> Result<()> {
        let mut v = serde_json::to_value(net.to_document())?;
        v["network_hash"] = Value::String(net_hash.into());
        self.write(name, &tagged_json(&self.hash, v)?)
    }

    pub fn network(&self) -> Result<MeraNetwork> {
        let mut v: Value = serde_json::from_str(&self.read("network.json")?)?;
        if let Value::Object(m) = &mut v {
            m.remove("config_hash");
            m.remove("network_hash");
        }
        let net = MeraNetwork::from_document(serde_json::from_value(v)?)?;
        if net.config() != &self.cfg.mera {
            return Err(Error::Config("network.json was built for a different mera config".into()));
        }
        Ok(net)
    }

    /// Whether network.json and optimize.json match the current mera and
    /// optimizer settings.
    pub fn network_fresh(&self) -> bool {
        let want = self.cfg.network_hash();
        ["network.json", "optimize.json"]
            .iter()
            .all(|n| artifact_hash(&self.path(n), "network_hash").as_deref() == Some(want.as_str()))
    }

    /// The optimized network, running the optimizer only when needed.
    pub fn ensure_network(&self) -> Result<MeraNetwork> {
        if !self.network_fresh() {
            self.write_config()?;
            self.optimize()?;
        }
        self.network()
    }

    pub fn opt_summary(&self) -> Result<OptSummary> {
        Ok(serde_json::from_str(&self.read("optimize.json")?)?)
    }

    // cone

    pub fn cone(&self, r: usize) -> Result<()> {
        let net = self.network()?;
        let (j, k) = self.cfg.pair(r);
        let cone = causal_cone(&net, &[j, k])?;
        let v = json!({
            "distance": r,
            "j": j,
            "k": k,
            "width": cone.width(),
            "peak_live": cone.peak_live(),
            "two_qubit_gates": cone.gates.len(),
            "gates": cone.gates,
            "wires": cone.wires,
        });
        self.write(&format!("cone_r{r}.json"), &tagged_json(&self.hash, v)?)
    }

    // compile

    fn sim_name(r: usize, fold: usize) -> String {
        format!("sim_r{r}_x{fold}.jsonl")
    }

    fn compile_one(&self, net: &MeraNetwork, r: usize) -> Result<ResourceStats> {
        let (j, k) = self.cfg.pair(r);
        let c = pair_circuit(net, j, k)?;
        let stats = resource_stats(&c, r, self.cfg.reuse_cap)?;
        self.write_text(&format!("circuit_r{r}.jsonl"), &c.to_jsonl()?)?;
        for fold in [1, self.cfg.zne_m] {
            let folded = if fold == 1 { c.clone() } else { fold_zne(&c, fold)? };
            let compiled = compile_for_simulation(&folded, self.cfg.reuse_cap)?;
            self.write_text(&Self::sim_name(r, fold), &compiled.circuit.to_jsonl()?)?;
        }
        Ok(stats)
    }

    /// Lowers, folds and compiles every distance in `rs`; writes the
    /// resource table for them.
    pub fn compile(&self, rs: &[usize]) -> Result<Vec<ResourceStats>> {
        let net = self.network()?;
        let stats = rs.par_iter().map(|&r| self.compile_one(&net, r)).collect::<Result<Vec<_>>>()?;
        self.write_text("fig1e.csv", &resource_csv(&stats)?)?;
        self.write_json("resources.json", &stats)?;
        Ok(stats)
    }

    fn circuit(&self, name: &str) -> Result<Circuit> {
        Circuit::from_jsonl(&self.read(name)?)
    }

    // simulate

    fn shots_stem(r: usize, fold: usize) -> String {
        format!("shots_r{r}_x{fold}")
    }

    fn simulate_one(&self, r: usize) -> Result<()> {
        let m = self.cfg.zne_m;
        let (n1, nm) = allocate_shots(self.cfg.shots, m)?;
        for (fold, n) in [(1, n1), (m, nm)] {
            let c = self.circuit(&Self::sim_name(r, fold))?;
            let seed = derive_seed(self.cfg.seed, "shots", r, fold);
            let t = run_shots_with(&c, &self.cfg.noise, n, ShotOptions { seed, fold })?;
            let stem = Self::shots_stem(r, fold);
            self.write_text(&format!("{stem}.csv"), &t.to_csv()?)?;
            self.write(&format!("{stem}.json"), &tagged_json(&self.hash, serde_json::to_value(&t)?)?)?;
        }
        Ok(())
    }

    pub fn simulate(&self, rs: &[usize]) -> Result<()> {
        rs.par_iter().map(|&r| self.simulate_one(r)).collect()
    }

    fn shots(&self, r: usize, fold: usize) -> Result<ShotTable> {
        let stem = Self::shots_stem(r, fold);
        ShotTable::from_parts(&self.read(&format!("{stem}.csv"))?, &self.read(&format!("{stem}.json"))?)
    }

    // mitigate

    fn mitigate_one(&self, r: usize) -> Result<DistanceRecord> {
        let m = self.cfg.zne_m;
        let (j, k) = self.cfg.pair(r);
        let (t1, tm) = (self.shots(r, 1)?, self.shots(r, m)?);
        let mut rec = mitigate(r, j, k, &t1, &tm, m as f64)?;
        let seed = derive_seed(self.cfg.seed, "bootstrap", r, 0);
        rec.bootstrap = Some(bootstrap_zne(&t1, &tm, m as f64, self.cfg.resamples, seed)?);
        Ok(rec)
    }

    pub fn mitigate(&self, rs: &[usize]) -> Result<Vec<DistanceRecord>> {
        let recs = rs.par_iter().map(|&r| self.mitigate_one(r)).collect::<Result<Vec<_>>>()?;
        self.write_text("mitigation.csv", &records_csv(&recs)?)?;
        self.write_json("records.json", &recs)?;
        Ok(recs)
    }

    // fit + report

    pub fn fit(&self) -> Result<Report> {
        let net = self.network()?;
        let records: Vec<DistanceRecord> = from_tagged(&self.read("records.json")?)?;
        let resources: Vec<ResourceStats> = from_tagged(&self.read("resources.json")?)?;
        let noiseless = records.iter().map(|r| correlator_xx(&net, r.j, r.k)).collect::<Result<Vec<_>>>()?;
        let energy = EnergyEngine::new(&net)?.energy(&net)?;
        let rep = analysis::report(&ReportInputs {
            config_hash: self.hash.clone(),
            network: &net,
            energy,
            energy_exact: exact_energy(&self.cfg)?,
            m: self.cfg.zne_m,
            placement: self.cfg.placement(),
            noise: self.cfg.noise,
            records: &records,
            noiseless: &noiseless,
            resources,
            fit: FitOptions {
                resamples: self.cfg.resamples,
                seed: derive_seed(self.cfg.seed, "fit", 0, 0),
                min_distance: self.cfg.min_distance,
            },
        })?;
        self.write("report.json", &rep.to_json()?)?;
        self.write_text("fig3.csv", &analysis::fig3_csv(&rep)?)?;
        self.write_text("parity.csv", &analysis::parity_csv(&rep)?)?;
        self.write_text("angles_hist.csv", &analysis::angles_hist_csv(&net, self.cfg.hist_bins)?)?;
        Ok(rep)
    }

    // mps

    pub fn mps_entropy(&self) -> Result<Vec<mps::ChiPoint>> {
        let net = self.network()?;
        let l = self.cfg.mera.l;
        let pair = (0, (l / 4).max(1) - 1);
        let rows = mps::chi_sweep(&net, &self.cfg.mps_chis, exact_energy(&self.cfg)?, pair)?;
        self.write_text("mps_entropy.csv", &mps::chi_sweep_csv(&rows)?)?;
        Ok(rows)
    }

    /// Every stage in order, skipping those whose outputs already carry
    /// the current hash.
    pub fn run_all(&self, mut log: impl FnMut(&str)) -> Result<Report> {
        self.write_config()?;
        if self.network_fresh() {
            log("optimize: up to date");
        } else {
            log("optimize: running");
            let res = self.optimize()?;
            log(&format!("optimize: E = {:.10}, {} iterations, {:.1} s", res.energy, res.trace.len() - 1, res.wall_time_s));
        }
        let rs = self.cfg.distances();
        let m = self.cfg.zne_m;
        let mut names: Vec<String> = vec!["fig1e.csv".into(), "resources.json".into()];
        for &r in &rs {
            names.push(format!("circuit_r{r}.jsonl"));
            names.extend([1, m].map(|f| Self::sim_name(r, f)));
        }
        if self.fresh(&names) {
            log("compile: up to date");
        } else {
            log("compile: running");
            self.compile(&rs)?;
        }
        let todo: Vec<usize> = rs
            .iter()
            .copied()
            .filter(|&r| {
                let names: Vec<String> =
                    [1, m].iter().flat_map(|&f| ["csv", "json"].map(|e| format!("{}.{e}", Self::shots_stem(r, f)))).collect();
                !self.fresh(&names)
            })
            .collect();
        if todo.is_empty() {
            log("simulate: up to date");
        } else {
            log(&format!("simulate: distances {todo:?}"));
            self.simulate(&todo)?;
        }
        if self.fresh(&["records.json".into(), "mitigation.csv".into()]) && todo.is_empty() {
            log("mitigate: up to date");
        } else {
            log("mitigate: running");
            self.mitigate(&rs)?;
        }
        log("fit: running");
        self.fit()
    }
}

fn from_tagged<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let v: Value = serde_json::from_str(text)?;
    let v = match v {
        Value::Object(mut m) if m.contains_key("config_hash") && m.contains_key("items") => m.remove("items").unwrap(),
        other => other,
    };
    Ok(serde_json::from_value(v)?)
}
