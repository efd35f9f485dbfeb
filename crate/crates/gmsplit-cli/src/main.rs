use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gmsplit_cli::{
    cmd_compare, cmd_gen_library, cmd_run, cmd_truth, parse_heuristics, MademCov, Overrides,
    Propagation, RunConfig, TruthOutcome,
};

#[derive(Parser)]
#[command(
    name = "gmsplit",
    about = "Gaussian mixture splitting for nonlinear uncertainty propagation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a univariate split library file.
    GenLibrary {
        /// Comma-separated component counts, e.g. 2,3,4,5.
        #[arg(long, default_value = "3")]
        sizes: String,
        /// Comma-separated regularization weights.
        #[arg(long, default_value = "1e-4,1e-3,1e-2")]
        lambdas: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate (or reuse) the truth artifacts for a scenario.
    Truth(ScenarioArgs),
    /// Split, propagate, and score every requested heuristic.
    Run(ScenarioArgs),
    /// Join several metric CSVs on their method column.
    Compare {
        /// Input metric CSV paths.
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario preset: polar, twobody, cr3bp-nrho.
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated heuristic tags, or "all".
    #[arg(long)]
    heuristics: Option<String>,
    /// Recursion depth (preset default when omitted).
    #[arg(long)]
    depth: Option<usize>,
    /// Split library file (a built-in 3-way library is used when omitted).
    #[arg(long)]
    library: Option<PathBuf>,
    /// Library regularization weight to select.
    #[arg(long)]
    lambda: Option<f64>,
    /// Library component count to select.
    #[arg(long)]
    split_size: Option<usize>,
    /// Monte Carlo truth sample count.
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Truth sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Weight exponent of the split criterion.
    #[arg(long)]
    gamma: Option<f64>,
    /// Split criterion threshold; 0 selects benchmark mode.
    #[arg(long)]
    threshold: Option<f64>,
    /// Covariance inducing the MaDEM norm: approx, linear, or mc.
    #[arg(long)]
    madem_cov: Option<String>,
    /// Mixand propagation: linear or ut.
    #[arg(long)]
    propagation: Option<String>,
    /// Config file of key = value overrides (strongest source).
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ScenarioArgs {
    fn resolve(&self) -> gmsplit::Result<RunConfig> {
        let flags = Overrides {
            scenario: self.scenario.clone(),
            heuristics: self
                .heuristics
                .as_deref()
                .map(parse_heuristics)
                .transpose()?,
            depth: self.depth,
            library: self.library.clone(),
            lambda: self.lambda,
            split_size: self.split_size,
            mc_samples: self.mc_samples,
            seed: self.seed,
            out: self.out.clone(),
            gamma: self.gamma,
            threshold: self.threshold,
            madem_cov: self.madem_cov.as_deref().map(MademCov::parse).transpose()?,
            propagation: self
                .propagation
                .as_deref()
                .map(Propagation::parse)
                .transpose()?,
        };
        RunConfig::resolve(flags, self.config.as_deref())
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> gmsplit::Result<Vec<T>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse()
                .map_err(|_| gmsplit::Error::ParseError(format!("bad {what} {tok:?}")))
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        // A closed stdout (e.g. piping into head) is not a failure.
        Err(gmsplit::Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> gmsplit::Result<ExitCode> {
    match cli.command {
        Command::GenLibrary {
            sizes,
            lambdas,
            out,
        } => {
            let sizes: Vec<usize> = parse_list(&sizes, "size")?;
            let lambdas: Vec<f64> = parse_list(&lambdas, "lambda")?;
            cmd_gen_library(&sizes, &lambdas, &out)?;
            println!(
                "wrote {} ({} entries)",
                out.display(),
                sizes.len() * lambdas.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Truth(args) => {
            let cfg = args.resolve()?;
            match cmd_truth(&cfg)? {
                TruthOutcome::AnalyticMarker(path) => {
                    println!("analytic truth; marker at {}", path.display());
                }
                TruthOutcome::Generated {
                    cache,
                    rows,
                    failed,
                } => {
                    println!(
                        "generated {rows} samples ({failed} failed) at {}",
                        cache.display()
                    );
                }
                TruthOutcome::Reused { cache, rows } => {
                    println!("reusing cache {} ({rows} samples)", cache.display());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let summary = cmd_run(&cfg)?;
            gmsplit_cli::print_summary(&mut std::io::stdout(), &summary)?;
            if summary.any_failed() {
                Ok(ExitCode::FAILURE)
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Compare { inputs, out } => {
            cmd_compare(&inputs, &out)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
