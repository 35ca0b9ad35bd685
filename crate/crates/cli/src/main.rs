//! `xfhedge` — run and compare online permutation learners from JSON
//! configs, inspect the generated networks and formulations, and run the
//! invariant suite at a chosen size.
//!
//! Exit codes: 0 on success, 2 on validation errors (bad flags, malformed
//! configs, out-of-range losses), 3 on numerical failures (non-convergent
//! projections or root searches).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use xfhedge_core::formulation::build_identity;
use xfhedge_core::harness::{self, Algorithm, NetworkKind};
use xfhedge_core::Error;

const SEED_ENV: &str = "XFHEDGE_SEED";

#[derive(Parser)]
#[command(
    name = "xfhedge",
    version,
    about = "Online learning of permutations over sorting-network formulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write its per-trial CSV.
    Run {
        /// JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path; overrides the config's `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Algorithm override: xf, hedge, or fpl.
        #[arg(long, value_enum)]
        algo: Option<AlgoArg>,
    },
    /// Run every config in a compare file against one shared loss stream.
    Compare {
        /// JSON file with a `configs` array sharing n, t, seed, adversary.
        #[arg(long)]
        config: PathBuf,
    },
    /// Print a network or formulation in the text dump format.
    Inspect {
        #[command(subcommand)]
        target: InspectTarget,
    },
    /// Run the invariant suite at size N and print pass/fail lines.
    Verify {
        #[arg(long)]
        n: usize,
    },
}

#[derive(Subcommand)]
enum InspectTarget {
    /// `n m` header plus one `k i j` line per comparator in network order.
    Network(InspectArgs),
    /// Header, reflection-order comparators, and the nonzero A/b entries.
    Formulation(InspectArgs),
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value_t = KindArg::Batcher)]
    kind: KindArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Bubble,
    Batcher,
}

impl From<KindArg> for NetworkKind {
    fn from(kind: KindArg) -> Self {
        match kind {
            KindArg::Bubble => NetworkKind::Bubble,
            KindArg::Batcher => NetworkKind::Batcher,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Xf,
    Hedge,
    Fpl,
}

impl From<AlgoArg> for Algorithm {
    fn from(algo: AlgoArg) -> Self {
        match algo {
            AlgoArg::Xf => Algorithm::Xf,
            AlgoArg::Hedge => Algorithm::Hedge,
            AlgoArg::Fpl => Algorithm::Fpl,
        }
    }
}

fn seed_override() -> Result<Option<u64>, Error> {
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|e| Error::InvalidConfig(format!("{SEED_ENV}={raw:?} is not a u64: {e}"))),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, out, algo } => {
            let mut config = harness::load_config(&config)?;
            if let Some(path) = out {
                config.out = Some(path);
            }
            if let Some(algo) = algo {
                config.algo = algo.into();
                config.validate()?;
            }
            if let Some(seed) = seed_override()? {
                config.seed = seed;
            }
            let output = harness::run(&config)?;
            println!("{}", output.summary);
            if let Some(path) = &config.out {
                println!("csv written to {}", path.display());
            }
            Ok(())
        }
        Command::Compare { config } => {
            let mut compare = harness::load_compare_config(&config)?;
            if let Some(seed) = seed_override()? {
                for member in &mut compare.configs {
                    member.seed = seed;
                }
            }
            let table = harness::compare(&compare.configs)?;
            print!("{table}");
            Ok(())
        }
        Command::Inspect { target } => {
            match target {
                InspectTarget::Network(args) => {
                    let network = NetworkKind::from(args.kind).build(args.n);
                    print!("{}", network.dump());
                }
                InspectTarget::Formulation(args) => {
                    let seq = NetworkKind::from(args.kind)
                        .build(args.n)
                        .to_reflection_order()?;
                    let ext = build_identity(&seq)?;
                    print!("{}", ext.dump());
                }
            }
            Ok(())
        }
        Command::Verify { n } => {
            let checks = harness::verify_suite(n)?;
            let mut failed = 0;
            for c in &checks {
                println!(
                    "{} {} ({})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
                if !c.passed {
                    failed += 1;
                }
            }
            if failed > 0 {
                return Err(Error::VerificationFailed { failed, n });
            }
            println!("all {} checks passed at n = {}", checks.len(), n);
            Ok(())
        }
    }
}
