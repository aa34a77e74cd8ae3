use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qmera_cli::{Run, RunConfig};
use qmera_core::{oracle, Error, Result};

#[derive(Parser)]
#[command(name = "qmera", version, about = "Quantum-circuit MERA pipeline for the critical Ising chain")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; MERA_OUT takes precedence.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated separations.
    #[arg(long, value_delimiter = ',')]
    distances: Option<Vec<usize>>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    zne_m: Option<usize>,
    #[arg(long)]
    noise_scale: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Variationally optimize the network.
    Optimize(Common),
    /// Causal cone of the pair at one separation.
    Cone {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        distance: usize,
    },
    /// Lower, fold and compile the pair circuits; writes fig1e.csv.
    Compile {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        distance: Option<usize>,
    },
    /// Sample shots at noise scales 1 and m.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        distance: Option<usize>,
    },
    /// Post-select, extrapolate and bootstrap.
    Mitigate(Common),
    /// Power-law fit and report.
    Fit(Common),
    /// Exact ground energy of the periodic chain.
    Oracle {
        #[arg(long = "L")]
        l: usize,
        #[arg(long, default_value_t = 1.0)]
        g: f64,
        #[arg(long = "J", default_value_t = 1.0)]
        j: f64,
    },
    /// Half-chain entropy of the network as an MPS over several bond dimensions.
    MpsEntropy(Common),
    /// Every stage, skipping those already up to date.
    RunAll(Common),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) => 2,
        Error::MissingArtifact(_) => 3,
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 3,
        Error::Numerical(_) | Error::EmptyEstimate | Error::TooWide { .. } | Error::Dimension(_) => 4,
        _ => 1,
    }
}

fn load(c: &Common) -> Result<Run> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            RunConfig::from_json(&text)?
        }
        None => return Err(Error::Config("--config is required".into())),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(d) = &c.distances {
        cfg.distances = Some(d.clone());
    }
    if let Some(n) = c.shots {
        cfg.shots = n;
    }
    if let Some(m) = c.zne_m {
        cfg.zne_m = m;
    }
    if let Some(s) = c.noise_scale {
        cfg.noise.scale = s;
    }
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let out = std::env::var_os("MERA_OUT").map(PathBuf::from).unwrap_or_else(|| c.out.clone());
    Run::new(cfg, out)
}

fn selected(run: &Run, distance: Option<usize>) -> Result<Vec<usize>> {
    match distance {
        Some(r) if r == 0 || r > run.cfg.mera.l / 2 => {
            Err(Error::Config(format!("distance {r} outside 1..={}", run.cfg.mera.l / 2)))
        }
        Some(r) => Ok(vec![r]),
        None => Ok(run.cfg.distances()),
    }
}

fn execute(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Oracle { l, g, j } => {
            let e = j * oracle::ff_energy(l, g)?;
            let v = serde_json::json!({ "L": l, "g": g, "energy": e, "per_site": e / l as f64 });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        Cmd::Optimize(c) => {
            let run = load(&c)?;
            run.write_config()?;
            let res = run.optimize()?;
            eprintln!(
                "energy {:.12}  iterations {}  converged {}  {:.1} s",
                res.energy,
                res.trace.len().saturating_sub(1),
                res.converged,
                res.wall_time_s
            );
        }
        Cmd::Cone { common, distance } => {
            let run = load(&common)?;
            selected(&run, Some(distance))?;
            run.cone(distance)?;
        }
        Cmd::Compile { common, distance } => {
            let run = load(&common)?;
            for s in run.compile(&selected(&run, distance)?)? {
                eprintln!(
                    "r = {:>3}: {} two-qubit gates, width {} / {} / {}",
                    s.distance, s.two_qubit_gates, s.width_no_reuse, s.width_greedy, s.width_cap
                );
            }
        }
        Cmd::Simulate { common, distance } => {
            let run = load(&common)?;
            run.simulate(&selected(&run, distance)?)?;
        }
        Cmd::Mitigate(c) => {
            let run = load(&c)?;
            run.mitigate(&run.cfg.distances())?;
        }
        Cmd::Fit(c) => {
            let run = load(&c)?;
            let rep = run.fit()?;
            eprintln!("eta = {:.4} +- {:.4} (noiseless {:.4})", rep.eta, rep.eta_err, rep.eta_noiseless);
        }
        Cmd::MpsEntropy(c) => {
            let run = load(&c)?;
            for p in run.mps_entropy()? {
                eprintln!("chi_mps {:>4}: S = {:.4} nats ({:.4} bits)", p.chi_mps, p.entropy, p.entropy_bits);
            }
        }
        Cmd::RunAll(c) => {
            let run = load(&c)?;
            let rep = run.run_all(|msg| eprintln!("{msg}"))?;
            eprintln!("eta = {:.4} +- {:.4} (noiseless {:.4})", rep.eta, rep.eta_err, rep.eta_noiseless);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
