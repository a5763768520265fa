use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nonconv_core::bounds::{self, ModDev};
use nonconv_core::config::{Document, RunConfig, Value};
use nonconv_core::parallel::{with_workers, Execution};
use nonconv_core::report::{Cell, Table};
use nonconv_core::verify::{self, Scale};
use nonconv_core::{runner, Error};

#[derive(Parser)]
#[command(name = "nonconv", version, about = "Simulate and check nonconventional sums over mixing processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file: replicate sums, statistics and checks.
    Simulate(SimulateArgs),
    /// Print closed-form bound values.
    Bounds {
        #[command(subcommand)]
        which: BoundCmd,
    },
    /// Run an acceptance suite: quick, full, martingale, cumulants, mdp.
    Verify {
        suite: String,
        /// Use the reduced replicate counts even for non-quick suites.
        #[arg(long)]
        reduced: bool,
    },
}

#[derive(Args)]
struct SimulateArgs {
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    replicates: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<u64>>,
}

#[derive(Subcommand)]
enum BoundCmd {
    /// `c_γ Δ^{−1/(1+2γ)}`.
    BerryEsseen {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Moderate-deviation envelope; prints OUT_OF_WINDOW past the window edge.
    Moddev {
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
        #[arg(long)]
        n: f64,
        #[arg(long)]
        c4: f64,
        #[arg(long, default_value_t = 1.0)]
        c5: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
    },
    /// Moment bound `E S̄_N^p`; zero for p ≤ 2.
    Momthm {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        n: f64,
        #[arg(long, default_value_t = 1.0)]
        c0: f64,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
    },
    /// Two-sided concentration bound on `P(|S̄_N| ≥ x√N)`.
    Concentration {
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
        #[arg(long)]
        n: f64,
        #[arg(long)]
        c1: f64,
        #[arg(long)]
        c2: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
    },
    /// `P(S_N ≥ t + Bδ₂) ≤ exp(−t²/(4B²Nℓδ₁²))`.
    Chernoff {
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
        #[arg(long)]
        n: f64,
        #[arg(long)]
        ell: usize,
        #[arg(long)]
        delta1: f64,
        #[arg(long)]
        delta2: f64,
        #[arg(long)]
        b: f64,
    },
    /// `ln E e^{λM_N} ≤ Bλ²Nℓδ₁ + Bλδ₂`.
    Mgf {
        #[arg(long, value_delimiter = ',', required = true)]
        lambda: Vec<f64>,
        #[arg(long)]
        n: f64,
        #[arg(long)]
        ell: usize,
        #[arg(long)]
        delta1: f64,
        #[arg(long)]
        delta2: f64,
        #[arg(long)]
        b: f64,
    },
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Budget { .. } => 3,
        _ => 2,
    }
}

fn load(args: &SimulateArgs) -> nonconv_core::Result<RunConfig> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut doc = Document::parse(&text)?;
    if let Some(s) = args.seed {
        doc.set("experiment", "seed", Value::Num(s as f64));
    }
    if let Some(r) = args.replicates {
        doc.set("experiment", "replicates", Value::Num(r as f64));
    }
    if let Some(g) = &args.n_grid {
        doc.set("experiment", "n_grid", Value::List(g.iter().map(|&n| Value::Num(n as f64)).collect()));
    }
    RunConfig::from_document(&doc)
}

fn simulate(args: &SimulateArgs) -> nonconv_core::Result<u8> {
    let cfg = load(args)?;
    let out = args.out_dir.clone();
    let manifest = with_workers(args.workers, || {
        runner::simulate(&cfg, &out, Execution::Parallel, &mut |msg| eprintln!("[{}] {msg}", cfg.name))
    })??;
    for c in &manifest.checks {
        println!("{:<20} {:?}  {}", c.name, c.verdict, c.detail);
    }
    println!("wrote {} files to {}", manifest.outputs.len(), out.display());
    Ok(if manifest.failed() { 1 } else { 0 })
}

fn bounds_table(which: &BoundCmd) -> nonconv_core::Result<Table> {
    let t = match which {
        BoundCmd::BerryEsseen { gamma, delta } => {
            let mut t = Table::new(&["gamma", "delta", "c_gamma", "bound"]);
            t.push(vec![(*gamma).into(), (*delta).into(), bounds::berry_esseen_constant(*gamma).into(), bounds::berry_esseen_bound(*delta, *gamma)?.into()]);
            t
        }
        BoundCmd::Moddev { x, n, c4, c5, gamma } => {
            let mut t = Table::new(&["x", "n", "bound"]);
            for &xi in x {
                let v = match bounds::moddev_envelope(xi, *n, *c4, *c5, *gamma)? {
                    ModDev::Value(v) => Cell::Real(v),
                    ModDev::OutOfWindow { .. } => Cell::Text("OUT_OF_WINDOW".into()),
                };
                t.push(vec![xi.into(), (*n).into(), v]);
            }
            t
        }
        BoundCmd::Momthm { p, n, c0, gamma } => {
            let mut t = Table::new(&["p", "n", "bound"]);
            t.push(vec![(*p).into(), (*n).into(), bounds::momthm_bound(*p, *n, *c0, *gamma)?.into()]);
            t
        }
        BoundCmd::Concentration { x, n, c1, c2, gamma } => {
            let mut t = Table::new(&["x", "n", "bound"]);
            for &xi in x {
                t.push(vec![xi.into(), (*n).into(), bounds::concentration_bound(xi, *n, *c1, *c2, *gamma)?.into()]);
            }
            t
        }
        BoundCmd::Chernoff { t: ts, n, ell, delta1, delta2, b } => {
            let mut t = Table::new(&["t", "threshold", "bound"]);
            for &ti in ts {
                let c = bounds::chernoff_tail_bound(ti, *n, *ell, *delta1, *delta2, *b)?;
                t.push(vec![ti.into(), c.threshold.into(), c.bound.into()]);
            }
            t
        }
        BoundCmd::Mgf { lambda, n, ell, delta1, delta2, b } => {
            if *ell == 0 || !(*n >= 1.0) || !(*delta1 > 0.0) || !(*b > 0.0) {
                return Err(Error::InvalidArgument("need ℓ ≥ 1, N ≥ 1, δ₁ > 0, B > 0".into()));
            }
            let mut t = Table::new(&["lambda", "ln_bound"]);
            for &l in lambda {
                t.push(vec![l.into(), bounds::mgf_bound_ln(l, *n, *ell, *delta1, *delta2, *b).into()]);
            }
            t
        }
    };
    Ok(t)
}

fn run_verify(suite: &str, reduced: bool) -> nonconv_core::Result<u8> {
    let ids = verify::suite(suite)?;
    let scale = if suite == "quick" || reduced { Scale::Quick } else { Scale::Full };
    let mut failed = false;
    for id in ids {
        let r = verify::criterion(id, scale)?;
        println!("{}", r.line());
        failed |= !r.pass();
    }
    Ok(u8::from(failed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Bounds { which } => bounds_table(which).map(|t| {
            print!("{}", t.render());
            0
        }),
        Command::Verify { suite, reduced } => run_verify(suite, *reduced),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Error::Config { line: 0, msg }) => {
            eprintln!("error: command-line override: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
