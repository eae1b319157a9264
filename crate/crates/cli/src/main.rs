//! `feedinf`: estimate how much of users' activity is copied from their
//! activity feed versus explained by their own preferences.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use feedinf_cli::commands::{
    cmd_estimate, cmd_ingest, cmd_match, cmd_report, cmd_sweep, cmd_synth, cmd_validate,
    parse_action_spec, DataSource,
};
use feedinf_cli::error::{CliError, CliResult};
use feedinf_cli::ingest::DatasetManifest;
use feedinf_cli::pipeline::{PipelineParams, TSpec};
use feedinf_core::synth::{NetworkConfig, ValidationParams};

#[derive(Parser)]
#[command(
    name = "feedinf",
    version,
    about = "Copy-influence estimation for activity feeds",
    long_about = "Estimates the fraction of users' actions copied from their activity feed \
                  by comparing overlap with friends' feeds against overlap with feeds of \
                  preference-matched non-friends, and validates the estimator on \
                  semi-synthetic data."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Action file, optionally labeled as `path:kind`; repeatable.
    #[arg(long = "actions", value_name = "PATH[:KIND]")]
    actions: Vec<String>,
    /// Edge-list file (`user,user`).
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Declared friend counts (`user,count`).
    #[arg(long = "declared-degrees")]
    declared_degrees: Option<PathBuf>,
    /// Declare the valid action kinds up front.
    #[arg(long, value_delimiter = ',')]
    kinds: Vec<String>,
    /// Skip malformed lines with a warning instead of failing.
    #[arg(long)]
    lenient: bool,
    /// Drop action lines whose rating column is below this value.
    #[arg(long = "min-rating")]
    min_rating: Option<f64>,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Generate a synthetic dataset with this many users instead of
    /// loading files.
    #[arg(long = "gen-users")]
    gen_users: Option<u32>,
    #[arg(long = "gen-items", default_value_t = 2400)]
    gen_items: u32,
    #[arg(long = "gen-clusters", default_value_t = 6)]
    gen_clusters: u32,
    #[arg(long = "gen-in-degree", default_value_t = 8.0)]
    gen_in_degree: f64,
    #[arg(long = "gen-cross-degree", default_value_t = 0.5)]
    gen_cross_degree: f64,
    #[arg(long = "gen-pre-actions", default_value_t = 40)]
    gen_pre_actions: u32,
    #[arg(long = "gen-post-actions", default_value_t = 30)]
    gen_post_actions: u32,
    #[arg(long = "gen-count-spread", default_value_t = 0.2)]
    gen_count_spread: f64,
    /// Taste-window width as a fraction of the cluster item pool.
    #[arg(long = "gen-taste-width", default_value_t = 1.0)]
    gen_taste_width: f64,
    /// Fraction of in-cluster edges tied to nearby taste centers.
    #[arg(long = "gen-edge-locality", default_value_t = 0.0)]
    gen_edge_locality: f64,
    #[arg(long = "gen-seed", default_value_t = 1)]
    gen_seed: u64,
}

impl GenArgs {
    fn network_config(&self) -> Option<NetworkConfig> {
        self.gen_users.map(|n_users| NetworkConfig {
            n_users,
            n_items: self.gen_items,
            n_clusters: self.gen_clusters,
            mean_in_degree: self.gen_in_degree,
            mean_cross_degree: self.gen_cross_degree,
            pre_actions_per_user: self.gen_pre_actions,
            post_actions_per_user: self.gen_post_actions,
            count_spread: self.gen_count_spread,
            taste_width: self.gen_taste_width,
            edge_locality: self.gen_edge_locality,
            ..NetworkConfig::default()
        })
    }
}

fn data_source(data: &DataArgs, gen: Option<&GenArgs>) -> CliResult<DataSource> {
    if let Some(cfg) = gen.and_then(|g| g.network_config()) {
        if data.edges.is_some() || !data.actions.is_empty() {
            return Err(CliError::usage(
                "--gen-users conflicts with --actions/--edges; pick one data source",
            ));
        }
        return Ok(DataSource::Generated {
            cfg,
            seed: gen.unwrap().gen_seed,
        });
    }
    let edges = data.edges.clone().ok_or_else(|| {
        CliError::usage("no data source: pass --actions and --edges, or --gen-users")
    })?;
    if data.actions.is_empty() {
        return Err(CliError::usage("at least one --actions file is required"));
    }
    Ok(DataSource::Files(DatasetManifest {
        actions: data.actions.iter().map(|s| parse_action_spec(s)).collect(),
        edges,
        declared_degrees: data.declared_degrees.clone(),
        kinds: data.kinds.clone(),
        lenient: data.lenient,
        min_rating: data.min_rating,
    }))
}

#[derive(Args, Debug)]
struct TArgs {
    /// Split time (epoch seconds): matching uses data before it,
    /// estimation data at or after it.
    #[arg(long)]
    t: Option<i64>,
    /// Choose the split time as a quantile of the action-time distribution
    /// (0.9 leaves 10% of actions after the split).
    #[arg(long = "t-quantile", conflicts_with = "t")]
    t_quantile: Option<f64>,
}

impl TArgs {
    fn spec(&self, default_t: Option<i64>) -> CliResult<TSpec> {
        match (self.t, self.t_quantile) {
            (Some(t), _) => Ok(TSpec::Absolute(t)),
            (None, Some(q)) => Ok(TSpec::Quantile(q)),
            (None, None) => match default_t {
                Some(t) => Ok(TSpec::Absolute(t)),
                None => Ok(TSpec::Quantile(0.9)),
            },
        }
    }
}

#[derive(Args, Debug)]
struct EstimatorArgs {
    /// Attention budget: how many recent feed actions a user sees.
    #[arg(long, default_value_t = 10)]
    m: usize,
    /// Feed aggregation: `full` or `latest-per-friend`.
    #[arg(long = "feed-mode", default_value = "full")]
    feed_mode: String,
    /// Relative similarity tolerance for matching.
    #[arg(long = "eps-s", default_value_t = 0.1)]
    eps_s: f64,
    /// Relative action-count tolerance for matching.
    #[arg(long = "eps-a", default_value_t = 0.1)]
    eps_a: f64,
    /// Similarity metric: `jaccard` or `cosine`.
    #[arg(long, default_value = "jaccard")]
    metric: String,
    /// Kind whose actions fill the feed.
    #[arg(long = "exposure-kind")]
    exposure_kind: Option<String>,
    /// Kind whose actions are tested against the feed.
    #[arg(long = "target-kind")]
    target_kind: Option<String>,
    /// Kind driving eligibility and matching (defaults to the exposure kind).
    #[arg(long = "eligibility-kind")]
    eligibility_kind: Option<String>,
    #[arg(long = "min-actions-total", default_value_t = 10)]
    min_actions_total: u32,
    #[arg(long = "min-actions-each-side", default_value_t = 5)]
    min_actions_each_side: u32,
    /// Fraction of declared friends that must be present for core status.
    #[arg(long = "core-threshold", default_value_t = 0.75)]
    core_threshold: f64,
    /// Minimum matched-friends fraction; users below it are excluded.
    #[arg(long = "coverage-required", default_value_t = 1.0)]
    coverage_required: f64,
    /// Cap on candidates sampled per user during matching.
    #[arg(long = "max-candidates")]
    max_candidates: Option<usize>,
    /// Bootstrap resamples for standard errors.
    #[arg(long, default_value_t = 1000)]
    bootstrap: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Activity-bin edges for the susceptibility curve.
    #[arg(long = "bin-edges", value_delimiter = ',')]
    bin_edges: Option<Vec<u64>>,
    #[arg(long = "min-bin-users", default_value_t = 5)]
    min_bin_users: usize,
}

impl EstimatorArgs {
    fn params(&self) -> PipelineParams {
        let defaults = PipelineParams::default();
        PipelineParams {
            m: self.m,
            feed_mode: self.feed_mode.clone(),
            eps_s: self.eps_s,
            eps_a: self.eps_a,
            metric: self.metric.clone(),
            exposure_kind: self.exposure_kind.clone().unwrap_or(defaults.exposure_kind),
            target_kind: self.target_kind.clone().unwrap_or(defaults.target_kind),
            eligibility_kind: self.eligibility_kind.clone(),
            min_actions_total: self.min_actions_total,
            min_actions_each_side: self.min_actions_each_side,
            core_threshold: self.core_threshold,
            coverage_required: self.coverage_required,
            max_candidates: self.max_candidates,
            n_bootstrap: self.bootstrap,
            bin_edges: self.bin_edges.clone().unwrap_or(defaults.bin_edges),
            min_bin_users: self.min_bin_users,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a dataset; print summary statistics as JSON.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        gen: GenArgs,
        /// Also write stats.json and the run manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Matching phase: pair every friend of every eligible user with a
    /// similar stranger.
    Match {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        gen: GenArgs,
        #[command(flatten)]
        t: TArgs,
        #[command(flatten)]
        est: EstimatorArgs,
        /// Output matches file (JSON lines).
        #[arg(long, default_value = "matches.json")]
        out: PathBuf,
    },
    /// Estimation phase: per-user overlaps and the network estimate from a
    /// matches file.
    Estimate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        gen: GenArgs,
        /// Matches file produced by `match`.
        #[arg(long, default_value = "matches.json")]
        matches: PathBuf,
        #[command(flatten)]
        est: EstimatorArgs,
        /// Output directory for per_user.csv, summary.json,
        /// susceptibility.csv.
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Generate semi-synthetic datasets from a behavioral process.
    Synth {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        gen: GenArgs,
        /// Behavioral process: ci|pp|ee|mix:<p>.
        #[arg(long)]
        process: String,
        /// Neighborhood size for the personal-preference process.
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        runs: u32,
        /// Split times, comma separated (defaults to the generator's split).
        #[arg(long = "t", value_delimiter = ',')]
        t: Vec<i64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "synth")]
        out: PathBuf,
    },
    /// Validation harness: run every process through the full pipeline and
    /// report recovery of the planted copy-influence.
    Validate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        gen: GenArgs,
        /// Processes to run, comma separated.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "ee,pp,ci,mix:0.5,mix:0.1,mix:0.01"
        )]
        processes: Vec<String>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        m: usize,
        #[arg(long = "eps-s", default_value_t = 0.1)]
        eps_s: f64,
        #[arg(long = "eps-a", default_value_t = 0.1)]
        eps_a: f64,
        /// Generated worlds per process per split time.
        #[arg(long, default_value_t = 10)]
        runs: u32,
        /// Split times, comma separated (defaults to the generator's split).
        #[arg(long = "t", value_delimiter = ',')]
        t: Vec<i64>,
        /// Drop runs whose fallback rate reaches this level.
        #[arg(long = "max-fallback-rate", default_value_t = 0.05)]
        max_fallback_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "validation")]
        out: PathBuf,
    },
    /// Re-run the pipeline across a range of one parameter.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        gen: GenArgs,
        #[command(flatten)]
        t: TArgs,
        #[command(flatten)]
        est: EstimatorArgs,
        /// Parameter to sweep: m|t|eps-s|eps-a.
        #[arg(long)]
        param: String,
        /// Values to sweep over, comma separated.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Render plot-ready data files and a text summary from a results
    /// directory.
    Report {
        /// Directory holding per_user.csv and summary.json.
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Ingest { data, gen, out } => {
            let source = data_source(&data, Some(&gen))?;
            cmd_ingest(&source, out.as_deref())
        }
        Command::Match {
            data,
            gen,
            t,
            est,
            out,
        } => {
            let source = data_source(&data, Some(&gen))?;
            let tspec = t.spec(source.default_t())?;
            let mut params = est.params();
            cmd_match(&source, tspec, &mut params, &out)
        }
        Command::Estimate {
            data,
            gen,
            matches,
            est,
            out,
        } => {
            let source = data_source(&data, Some(&gen))?;
            let mut params = est.params();
            cmd_estimate(&source, &matches, &mut params, &out)
        }
        Command::Synth {
            data,
            gen,
            process,
            k,
            m,
            runs,
            t,
            seed,
            out,
        } => {
            let source = data_source(&data, Some(&gen))?;
            let t_list = default_t_list(t, &source)?;
            cmd_synth(&source, &process, k, m, runs, &t_list, seed, &out)
        }
        Command::Validate {
            data,
            gen,
            processes,
            k,
            m,
            eps_s,
            eps_a,
            runs,
            t,
            max_fallback_rate,
            seed,
            out,
        } => {
            let source = data_source(&data, Some(&gen))?;
            let t_list = default_t_list(t, &source)?;
            let vparams = ValidationParams {
                m,
                eps_s,
                eps_a,
                max_fallback_rate,
                ..ValidationParams::default()
            };
            cmd_validate(&source, &processes, k, runs, &t_list, &vparams, seed, &out)
        }
        Command::Sweep {
            data,
            gen,
            t,
            est,
            param,
            values,
            out,
        } => {
            let source = data_source(&data, Some(&gen))?;
            if values.is_empty() {
                return Err(CliError::usage("sweep needs at least one --values entry"));
            }
            let tspec = t.spec(source.default_t())?;
            cmd_sweep(&source, &param, &values, tspec, &est.params(), &out)
        }
        Command::Report { results, out } => cmd_report(&results, &out),
    }
}

fn default_t_list(t: Vec<i64>, source: &DataSource) -> CliResult<Vec<i64>> {
    if !t.is_empty() {
        return Ok(t);
    }
    match source.default_t() {
        Some(t) => Ok(vec![t]),
        None => Err(CliError::usage(
            "--t is required when the dataset comes from files",
        )),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with successful exit.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
