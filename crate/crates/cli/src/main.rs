//! `olle`: synthetic corpora, LoFF detection, calibrated estimates, gap
//! analyses and regression tables.
//!
//! Exit codes: 0 success, 1 data error, 2 configuration error, 3 numerical
//! failure.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{ReportArgs, SynthArgs};
use config::{Overrides, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "olle",
    version,
    about = "Online language literacy estimates from social media text"
)]
struct Cli {
    /// Worker threads; defaults to the number of cores. Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with known literacy, lexicons, a benchmark and a config.
    Synth {
        /// TOML synthetic spec; defaults apply to missing keys.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of countries.
        #[arg(long)]
        countries: Option<usize>,
        /// Users per country.
        #[arg(long)]
        users: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Build popularity curves and detect each language's LoFF rank range.
    DetectLoff(Pipeline),
    /// Aggregate, calibrate against the benchmark and write OLLE estimates.
    Estimate {
        #[command(flatten)]
        pipeline: Pipeline,
        /// LoFF ranges from detect-loff [default: <out>/loff_ranges.json].
        #[arg(long)]
        ranges: Option<PathBuf>,
    },
    /// Gender gaps, regional disparities and gap regressions.
    Gaps {
        #[command(flatten)]
        pipeline: Pipeline,
        #[arg(long)]
        ranges: Option<PathBuf>,
        /// Output of estimate [default: <out>/estimate.json].
        #[arg(long)]
        estimate: Option<PathBuf>,
    },
    /// Render LaTeX regression tables.
    Report {
        /// Table description (JSON); may repeat.
        #[arg(long)]
        table: Vec<PathBuf>,
        /// Calibration table from an estimate.json.
        #[arg(long)]
        estimate: Option<PathBuf>,
        /// Gap regression report(s) written by gaps, one column each.
        #[arg(long)]
        regression: Vec<PathBuf>,
        /// Write here instead of standard output.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

/// Flags shared by the pipeline stages; each overrides the config file.
#[derive(Args)]
struct Pipeline {
    /// TOML pipeline config.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    posts: Option<PathBuf>,
    /// Directory of `<language>.txt` lexicons.
    #[arg(long)]
    lexicons: Option<PathBuf>,
    #[arg(long)]
    benchmark: Option<PathBuf>,
    #[arg(long)]
    population_weights: Option<PathBuf>,
    #[arg(long)]
    geo_groups: Option<PathBuf>,
    #[arg(long)]
    covariates: Option<PathBuf>,
    #[arg(long)]
    regressions: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Comma-separated language codes.
    #[arg(long, value_delimiter = ',')]
    languages: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bootstrap replicates.
    #[arg(long)]
    replicates: Option<usize>,
    /// Kneedle sensitivity.
    #[arg(long)]
    sensitivity: Option<f64>,
    #[arg(long)]
    min_group_size: Option<u64>,
    /// Minimum Internet penetration for calibration countries.
    #[arg(long)]
    min_internet: Option<f64>,
}

impl Pipeline {
    fn resolve(self) -> olle_core::Result<PipelineConfig> {
        let o = Overrides {
            posts: self.posts,
            lexicons: self.lexicons,
            benchmark: self.benchmark,
            population_weights: self.population_weights,
            geo_groups: self.geo_groups,
            covariates: self.covariates,
            regressions: self.regressions,
            out: self.out,
            languages: self.languages,
            seed: self.seed,
            replicates: self.replicates,
            sensitivity: self.sensitivity,
            min_group_size: self.min_group_size,
            min_internet: self.min_internet,
        };
        PipelineConfig::resolve(self.config.as_deref(), &o)
    }
}

fn run(cli: Cli) -> olle_core::Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| olle_core::Error::Config(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::Synth {
            spec,
            seed,
            countries,
            users,
            out,
        } => commands::synth(&SynthArgs {
            spec,
            seed,
            countries,
            users,
            out,
        }),
        Command::DetectLoff(p) => commands::detect_loff(&p.resolve()?),
        Command::Estimate { pipeline, ranges } => {
            commands::estimate(&pipeline.resolve()?, ranges.as_deref())
        }
        Command::Gaps {
            pipeline,
            ranges,
            estimate,
        } => commands::gaps(&pipeline.resolve()?, ranges.as_deref(), estimate.as_deref()),
        Command::Report {
            table,
            estimate,
            regression,
            output,
        } => commands::report(&ReportArgs {
            table,
            estimate,
            regression,
            output,
        }),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
