//! `fairstream` command-line front end.
//!
//! Exit status: 0 on success, 2 for a bad request (flags, shapes, spec), 3
//! when the data cannot be read or violates its contract, 4 when the
//! algorithm hits an unrecoverable degeneracy. Every failure prints one
//! line `error: kind=<kind> class=<class> reason="<text>"` to stderr.

mod commands;
mod input;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairstream::fairpca::UnfairRank;
use fairstream::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "fairstream", version, about = "Streaming fair PCA: fit, solve exactly, evaluate, probe")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw samples from a synthetic spec into a CSV file.
    Synth(SynthArgs),
    /// Streaming fit: unfair subspace, then deflated power iterations.
    Fit(FitArgs),
    /// Exact offline solution on an in-memory dataset.
    Oracle(OracleArgs),
    /// Metrics of a model on a dataset.
    Eval(EvalArgs),
    /// Subspace distance and cross fairness of two models.
    Compare(CompareArgs),
    /// Success rate of seeded fits over a grid of sizes.
    Probe(ProbeArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// Synthetic spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Number of samples.
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct FitArgs {
    /// CSV data file.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub data: Option<PathBuf>,
    /// Synthetic spec to stream from instead of a file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// JSON file with defaults for any of the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Second-moment rank, or one rank per attribute (`2,1`).
    #[arg(long, value_parser = parse_rank)]
    pub m: Option<UnfairRank>,
    #[arg(long = "block-b")]
    pub block_b: Option<usize>,
    #[arg(long = "block-B")]
    pub block_big_b: Option<usize>,
    #[arg(long = "iters-t")]
    pub iters_t: Option<usize>,
    #[arg(long = "iters-tau")]
    pub iters_tau: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub g_threshold: Option<f64>,
    #[arg(long)]
    pub degenerate_threshold: Option<f64>,
    /// Group counts of each sensitive attribute (`2,3`); selects the
    /// one-vs-rest estimator.
    #[arg(long, value_delimiter = ',')]
    pub multi_schema: Option<Vec<usize>>,
    /// Subtract the pooled mean, computed in a first pass over the file.
    #[arg(long)]
    pub center: bool,
    /// Reduce each block on all cores. Results are bit-identical.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_parser = parse_rank)]
    pub m: Option<UnfairRank>,
    #[arg(long)]
    pub g_threshold: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub multi_schema: Option<Vec<usize>>,
    #[arg(long)]
    pub center: bool,
    /// Plain top-k PCA with no fairness constraint.
    #[arg(long)]
    pub vanilla: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Var,
    Mmd,
    Fairnorm,
    Subopt,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Rbf,
    Linear,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults to var,fairnorm,mmd, plus subopt when --against is given.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<Metric>>,
    /// Reference model: its loading for suboptimality and subspace
    /// distance, its unfair basis for the fairness norm.
    #[arg(long)]
    pub against: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "rbf")]
    pub kernel: KernelArg,
    /// Fixed RBF bandwidth instead of the median heuristic.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// U-statistic MMD estimate instead of the V-statistic.
    #[arg(long)]
    pub unbiased: bool,
    #[arg(long, value_delimiter = ',')]
    pub multi_schema: Option<Vec<usize>>,
    #[arg(long)]
    pub center: bool,
    #[arg(long)]
    pub parallel: bool,
    /// Report file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    #[arg(long = "model-a")]
    pub model_a: PathBuf,
    #[arg(long = "model-b")]
    pub model_b: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// JSON array of `{"b", "B", "T", "Tau"}` objects.
    #[arg(long)]
    pub grid_file: PathBuf,
    /// `inf` disables the check.
    #[arg(long)]
    pub eps_o: f64,
    #[arg(long)]
    pub eps_f: f64,
    #[arg(long)]
    pub trials: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub g_threshold: Option<f64>,
    #[arg(long)]
    pub parallel: bool,
    /// Output prefix; writes `<out>.json` and `<out>.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_rank(text: &str) -> Result<UnfairRank, String> {
    let parts: Result<Vec<usize>, _> = text.split(',').map(|p| p.trim().parse::<usize>()).collect();
    match parts {
        Ok(v) if v.len() == 1 => Ok(UnfairRank::Single(v[0])),
        Ok(v) => Ok(UnfairRank::PerAttribute(v)),
        Err(e) => Err(format!("expected a rank or a comma-separated list of ranks: {e}")),
    }
}

fn error_line(kind: &str, class: &str, reason: &str) -> String {
    let reason = reason.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    format!("error: kind={kind} class={class} reason=\"{reason}\"")
}

fn exit_for(e: &Error) -> ExitCode {
    let (class, code) = match e.class() {
        ErrorClass::Config => ("config", 2),
        ErrorClass::Data => ("data", 3),
        ErrorClass::Algorithm => ("algorithm", 4),
    };
    eprintln!("{}", error_line(e.kind(), class, &e.to_string()));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("{}", error_line("usage", "config", &first));
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Fit(a) => commands::fit(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Eval(a) => commands::eval(a),
        Command::Compare(a) => commands::compare(a),
        Command::Probe(a) => commands::probe(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => exit_for(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks() {
        assert_eq!(parse_rank("3").unwrap(), UnfairRank::Single(3));
        assert_eq!(parse_rank("2,1").unwrap(), UnfairRank::PerAttribute(vec![2, 1]));
        assert!(parse_rank("x").is_err());
    }

    #[test]
    fn error_lines_escape_quotes() {
        assert_eq!(
            error_line("io", "data", "no \"file\"\nhere"),
            "error: kind=io class=data reason=\"no \\\"file\\\" here\""
        );
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
