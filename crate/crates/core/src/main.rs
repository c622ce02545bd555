use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use skewprod::cli::{parse_config_with, run_experiment, ExperimentConfig, ExperimentKind, Outcome, Overrides};

#[derive(Parser)]
#[command(name = "skewprod", version, about = "Random products of group translations and their skew products")]
#[command(after_help = ExperimentConfig::key_reference())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` in [experiment].
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `dir` in [output].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the run record as JSON instead of a summary.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random-product orbit.
    Orbit(Common),
    /// Test an orbit for equidistribution.
    Equidist(Common),
    /// Compare skew-product time averages with the product measure.
    SkewTest(Common),
    /// Distance of Følner averages from Haar measure.
    Folner(Common),
    /// Greedy convex combinations of word maps approximating Haar measure.
    MeasureApprox(Common),
    /// Sensitivity, E_k and equicontinuity probes.
    Sensitivity(Common),
    /// List the group and action string formats.
    ListGroups,
}

const GROUPS: &str = "\
Groups:
  torus:d          R^d/Z^d, elements like 0.25 or 0.1/0.7
  cyclic:n         Z/nZ, elements like 3
  product:n1xn2    Z/n1 x Z/n2, elements like 1/4
  perm:n           S_n (n <= 12), zero-based one-line notation like 1/0/2
  su2              unit quaternions, elements like 1/0/0/0

Actions:
  translation(GROUP; gens=E1,E2[; policy=strict][; dense=true])
  translation(GROUP; gens=haar:K)
  rotation(A1,A2,...)        circle rotations
  doubling-fixture           x -> 2x on the circle (not invertible)

Sequences:
  geometric:q | uniform:K | custom:[p1,...];tail=q
";

fn run(kind: ExperimentKind, c: Common) -> ExitCode {
    let text = match std::fs::read_to_string(&c.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", c.config.display());
            return ExitCode::from(2);
        }
    };
    let overrides = Overrides { seed: c.seed, out: c.out };
    let cfg = match parse_config_with(&text, &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if cfg.kind != kind {
        eprintln!("error: config is a `{}` experiment, not `{kind}`", cfg.kind);
        return ExitCode::from(2);
    }
    let record = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    for w in &record.warnings {
        eprintln!("warning: {w}");
    }
    if c.json {
        match serde_json::to_string_pretty(&record) {
            Ok(s) => println!("{s}"),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(3);
            }
        }
    } else {
        println!("{} -> {}", kind, record.out_dir.display());
        println!("outcome: {:?}", record.outcome);
        for (file, digest) in &record.digests {
            println!("  {file}  sha256:{digest}");
        }
    }
    match record.outcome {
        Outcome::Fail => ExitCode::from(1),
        _ => ExitCode::SUCCESS,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Orbit(c) => run(ExperimentKind::Orbit, c),
        Command::Equidist(c) => run(ExperimentKind::Equidist, c),
        Command::SkewTest(c) => run(ExperimentKind::SkewTest, c),
        Command::Folner(c) => run(ExperimentKind::Folner, c),
        Command::MeasureApprox(c) => run(ExperimentKind::MeasureApprox, c),
        Command::Sensitivity(c) => run(ExperimentKind::Sensitivity, c),
        Command::ListGroups => {
            print!("{GROUPS}");
            ExitCode::SUCCESS
        }
    }
}
