use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ffbias::experiment::{
    parse_c_list, parse_count, run_command, Command, CommandOutput, ConfigLayer, ExperimentError, Plant, Variety,
};

#[derive(Parser, Debug)]
#[command(name = "ffbias", version, about = "Fiber censuses, bias, rank and singular loci over finite fields")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Exact fiber sizes over one extension
    Census,
    /// Bias measures b_n for n = 1..nmax and their estimate
    Bias,
    /// Certified rank interval with a witness factorization
    Rank,
    /// Singular locus of X (top part) or Y_t (closure of F = t)
    Singular,
    /// c-goodness verdicts for the configured c values
    Good,
    /// Fiber deviations scaled by q^{n(c/2-1)}
    VerifyLemma3,
    /// Bias estimate against 2/(c-2)
    DerivedBound,
    /// Seeded ensemble as CSV plus an aggregate JSON
    Ensemble,
}

#[derive(clap::Args, Debug, Default)]
struct Opts {
    /// Coefficient field, `p^m` or `p^m:n`
    #[arg(long, global = true)]
    field: Option<String>,
    /// Number of variables (inferred from the polynomial when absent)
    #[arg(long, global = true)]
    nvars: Option<usize>,
    /// Seed of random polynomials, t samples and witness search
    #[arg(long, global = true, value_parser = parse_count)]
    seed: Option<u64>,
    /// Maximum number of evaluated points per sweep
    #[arg(long, global = true, value_parser = parse_count)]
    budget: Option<u64>,
    /// Worker threads (default: FFBIAS_WORKERS, then all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file (default: stdout)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `key = value` configuration file; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Polynomial in x0, x1, .. (`z` names the last variable)
    #[arg(long, global = true, allow_hyphen_values = true)]
    poly: Option<String>,
    /// Level of the census
    #[arg(long, global = true)]
    n: Option<u32>,
    /// Highest level of the main sweep
    #[arg(long, global = true)]
    nmax: Option<u32>,
    /// Comma-separated c values
    #[arg(long, global = true, allow_hyphen_values = true)]
    c: Option<String>,
    /// Degree of the extension the values t range over
    #[arg(long, global = true)]
    t_ext: Option<u32>,
    /// Value t for `singular --variety y`
    #[arg(long, global = true)]
    t: Option<String>,
    /// `x` (top part) or `y` (closure of F = t)
    #[arg(long, global = true)]
    variety: Option<Variety>,
    /// Ensemble size
    #[arg(long, global = true)]
    size: Option<usize>,
    /// Degree of ensemble polynomials
    #[arg(long, global = true)]
    degree: Option<u32>,
    /// Draw homogeneous ensemble polynomials
    #[arg(long, global = true)]
    homogeneous: bool,
    /// random, product or hyperbolic:r
    #[arg(long, global = true)]
    plant: Option<Plant>,
    /// Rank splitting low- and high-rank rows in the ensemble aggregate
    #[arg(long, global = true)]
    r_threshold: Option<u32>,
    /// Singular-locus levels inside composite commands
    #[arg(long, global = true)]
    sing_nmax: Option<u32>,
    /// Candidate budget of the witness search
    #[arg(long, global = true, value_parser = parse_count)]
    search_budget: Option<u64>,
    /// Largest extension degree for witness search
    #[arg(long, global = true)]
    ext_degree: Option<u32>,
    /// Ensemble aggregate JSON path (default: stderr)
    #[arg(long, global = true)]
    aggregate: Option<PathBuf>,
}

impl Opts {
    fn layer(&self) -> Result<ConfigLayer, ExperimentError> {
        let c = match &self.c {
            Some(text) => Some(parse_c_list(text).map_err(ExperimentError::Config)?),
            None => None,
        };
        Ok(ConfigLayer {
            field: self.field.clone(),
            nvars: self.nvars,
            poly: self.poly.clone(),
            seed: self.seed,
            budget: self.budget,
            workers: self.workers,
            out: self.out.clone(),
            aggregate: self.aggregate.clone(),
            n: self.n,
            n_max: self.nmax,
            c,
            t_ext: self.t_ext,
            t: self.t.clone(),
            variety: self.variety,
            size: self.size,
            degree: self.degree,
            homogeneous: self.homogeneous.then_some(true),
            plant: self.plant,
            r_threshold: self.r_threshold,
            sing_nmax: self.sing_nmax,
            search_budget: self.search_budget,
            ext_degree: self.ext_degree,
        })
    }
}

fn run(cli: &Cli) -> Result<i32, ExperimentError> {
    let file = match &cli.opts.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
            ConfigLayer::parse(&text)?
        }
        None => ConfigLayer::default(),
    };
    let env = std::env::var("FFBIAS_WORKERS").ok();
    let cfg = file.overlay(cli.opts.layer()?).resolve(env.as_deref())?;
    let command = match cli.command {
        Cmd::Census => Command::Census,
        Cmd::Bias => Command::Bias,
        Cmd::Rank => Command::Rank,
        Cmd::Singular => Command::Singular,
        Cmd::Good => Command::Good,
        Cmd::VerifyLemma3 => Command::VerifyLemma3,
        Cmd::DerivedBound => Command::DerivedBound,
        Cmd::Ensemble => Command::Ensemble,
    };
    let CommandOutput {
        body,
        aggregate,
        warnings,
        exit_code,
    } = run_command(command, &cfg)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, &body)?,
        None => print!("{body}"),
    }
    if let Some(agg) = aggregate {
        match &cfg.aggregate {
            Some(path) => std::fs::write(path, agg)?,
            None => eprint!("{agg}"),
        }
    }
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
