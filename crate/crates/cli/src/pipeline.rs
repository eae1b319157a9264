//! Parallel drivers around the core pipeline: split-time resolution,
//! eligibility, matching, and estimation over a loaded dataset. Per-user
//! work fans out over a thread pool; per-user seeds are derived from the
//! master seed, so parallel and sequential runs produce identical output.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use feedinf_core::estimation::{
    estimate_user, network_estimate, susceptibility_by_activity, ActivityBin, EstimateSummary,
    KindPair, OverlapRecord, SkipReason,
};
use feedinf_core::feed::{FeedMode, FeedModel};
use feedinf_core::matching::{match_strangers, MatchAssignment, MatchConfig};
use feedinf_core::model::{eligible_users, mask_to_users, KindId, SplitConfig, UserId};
use feedinf_core::rng::derive_seed;
use feedinf_core::similarity::{Metric, ProfileStore};
use feedinf_core::synth::{validation_single_run, RunStats, SynthProcess, ValidationParams};
use feedinf_core::{ActivityLog, SocialGraph, Timestamp};

use crate::error::{CliError, CliResult};
use crate::ingest::Dataset;

/// How the split time is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TSpec {
    Absolute(Timestamp),
    /// Empirical quantile of the global action-time distribution; 0.9
    /// leaves 10% of actions after the split.
    Quantile(f64),
}

pub fn resolve_t(log: &ActivityLog, spec: TSpec) -> CliResult<Timestamp> {
    match spec {
        TSpec::Absolute(t) => Ok(t),
        TSpec::Quantile(q) => {
            if !(0.0..=1.0).contains(&q) {
                return Err(CliError::usage(format!("t-quantile {q} outside [0, 1]")));
            }
            let mut times: Vec<Timestamp> = log.iter_actions().map(|a| a.time).collect();
            if times.is_empty() {
                return Err(CliError::data("cannot take a time quantile of an empty log"));
            }
            times.sort_unstable();
            let idx = ((times.len() as f64 * q) as usize).min(times.len() - 1);
            Ok(times[idx])
        }
    }
}

/// Full parameter set of a matching + estimation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineParams {
    pub m: usize,
    pub feed_mode: String,
    pub eps_s: f64,
    pub eps_a: f64,
    pub metric: String,
    pub exposure_kind: String,
    pub target_kind: String,
    /// Kind whose activity drives eligibility and matching; defaults to the
    /// exposure kind.
    pub eligibility_kind: Option<String>,
    pub min_actions_total: u32,
    pub min_actions_each_side: u32,
    pub core_threshold: f64,
    pub coverage_required: f64,
    pub max_candidates: Option<usize>,
    pub n_bootstrap: u32,
    pub bin_edges: Vec<u64>,
    pub min_bin_users: usize,
    pub seed: u64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            m: 10,
            feed_mode: "full".to_string(),
            eps_s: 0.1,
            eps_a: 0.1,
            metric: "jaccard".to_string(),
            exposure_kind: "action".to_string(),
            target_kind: "action".to_string(),
            eligibility_kind: None,
            min_actions_total: 10,
            min_actions_each_side: 5,
            core_threshold: 0.75,
            coverage_required: 1.0,
            max_candidates: None,
            n_bootstrap: 1000,
            bin_edges: vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 10_000],
            min_bin_users: 5,
            seed: 0,
        }
    }
}

impl PipelineParams {
    pub fn metric_enum(&self) -> CliResult<Metric> {
        match self.metric.as_str() {
            "jaccard" => Ok(Metric::Jaccard),
            "cosine" => Ok(Metric::Cosine),
            other => Err(CliError::usage(format!(
                "unknown metric `{other}` (expected jaccard|cosine)"
            ))),
        }
    }

    pub fn feed_model(&self) -> CliResult<FeedModel> {
        let mode = match self.feed_mode.as_str() {
            "full" => FeedMode::FullChronological,
            "latest-per-friend" => FeedMode::LatestPerFriend,
            other => {
                return Err(CliError::usage(format!(
                    "unknown feed mode `{other}` (expected full|latest-per-friend)"
                )))
            }
        };
        Ok(FeedModel { m: self.m, mode })
    }

    pub fn match_kind_name(&self) -> &str {
        self.eligibility_kind.as_deref().unwrap_or(&self.exposure_kind)
    }
}

/// Matching-phase output.
pub struct MatchOutput {
    pub t: Timestamp,
    pub eligible: Vec<UserId>,
    pub assignments: Vec<MatchAssignment>,
}

/// Runs eligibility + matching at `t` in parallel over users.
pub fn run_matching(ds: &Dataset, t: Timestamp, params: &PipelineParams) -> CliResult<MatchOutput> {
    let kind = ds.kind_id(params.match_kind_name())?;
    let split = SplitConfig {
        t,
        min_actions_total: params.min_actions_total,
        min_actions_each_side: params.min_actions_each_side,
    };
    let mask = eligible_users(&ds.log, &ds.graph, &split, params.core_threshold, kind)
        .map_err(|e| CliError::data(e.to_string()))?;
    let eligible = mask_to_users(&mask);
    let (pre, _) = ds.log.split_at(t);
    let profiles = ProfileStore::build(&pre, kind);
    let cfg = MatchConfig {
        eps_s: params.eps_s,
        eps_a: params.eps_a,
        rng_seed: derive_seed(params.seed, "match", 0),
        max_candidates: params.max_candidates,
        coverage_required: params.coverage_required,
        metric: params.metric_enum()?,
    };
    let assignments: Vec<MatchAssignment> = eligible
        .par_iter()
        .map(|&u| match_strangers(u, &ds.graph, &profiles, &eligible, &cfg))
        .collect();
    Ok(MatchOutput {
        t,
        eligible,
        assignments,
    })
}

/// Estimation-phase output.
pub struct EstimateOutput {
    pub records: Vec<OverlapRecord>,
    pub summary: EstimateSummary,
    pub bins: Vec<ActivityBin>,
    pub skipped_excluded: usize,
    pub skipped_no_actions: usize,
}

/// Runs per-user estimation over the post-split log and aggregates.
pub fn run_estimation(
    ds: &Dataset,
    t: Timestamp,
    assignments: &[MatchAssignment],
    params: &PipelineParams,
) -> CliResult<EstimateOutput> {
    let kinds = KindPair {
        exposure: ds.kind_id(&params.exposure_kind)?,
        target: ds.kind_id(&params.target_kind)?,
    };
    let model = params.feed_model()?;
    let (_, post) = ds.log.split_at(t);
    let results: Vec<Result<OverlapRecord, SkipReason>> = assignments
        .par_iter()
        .map(|a| estimate_user(a.user, a, &ds.graph, &post, model, kinds))
        .collect();
    let mut records = Vec::new();
    let mut skipped_excluded = 0;
    let mut skipped_no_actions = 0;
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(SkipReason::Excluded) => skipped_excluded += 1,
            Err(SkipReason::NoPostActions) => skipped_no_actions += 1,
        }
    }
    let summary = network_estimate(
        &records,
        params.n_bootstrap,
        derive_seed(params.seed, "bootstrap", 0),
    )
    .map_err(|e| CliError::data(e.to_string()))?;
    let bins = susceptibility_by_activity(
        &records,
        &params.bin_edges,
        params.min_bin_users,
        params.n_bootstrap,
        derive_seed(params.seed, "bins", 0),
    );
    Ok(EstimateOutput {
        records,
        summary,
        bins,
        skipped_excluded,
        skipped_no_actions,
    })
}

/// One row of a validation table plus its inputs, aggregated across runs.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationTableRow {
    pub process: String,
    pub friends_overlap: f64,
    pub copy_influence: f64,
    pub std_err: f64,
    pub runs_used: u32,
    pub runs_dropped: u32,
}

/// Parallel validation harness: every (process, t, run) cell fans out to a
/// worker; aggregation matches the sequential core driver.
#[allow(clippy::too_many_arguments)]
pub fn run_validation(
    log: &ActivityLog,
    graph: &SocialGraph,
    kind: KindId,
    processes: &[SynthProcess],
    t_list: &[Timestamp],
    n_runs: u32,
    vparams: &ValidationParams,
    master_seed: u64,
) -> CliResult<Vec<ValidationTableRow>> {
    let mut rows = Vec::new();
    for (pi, &process) in processes.iter().enumerate() {
        let mut cells: Vec<(usize, u32)> = Vec::new();
        for ti in 0..t_list.len() {
            for run in 0..n_runs {
                cells.push((ti, run));
            }
        }
        let stats: Vec<RunStats> = cells
            .par_iter()
            .map(|&(ti, run)| {
                let run_seed = derive_seed(
                    master_seed,
                    "validate",
                    ((pi as u64) << 40) | ((ti as u64) << 20) | run as u64,
                );
                validation_single_run(log, graph, kind, process, t_list[ti], vparams, run_seed)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::data(e.to_string()))?;
        let mut fr = Vec::new();
        let mut ci = Vec::new();
        let mut dropped = 0u32;
        for s in &stats {
            if s.fallback_rate >= vparams.max_fallback_rate || s.n_users == 0 {
                dropped += 1;
            } else {
                fr.push(s.mean_friends_overlap);
                ci.push(s.mean_copy_influence);
            }
        }
        let mean = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let se = if ci.len() >= 2 {
            let m = mean(&ci);
            let ss: f64 = ci.iter().map(|x| (x - m) * (x - m)).sum();
            (ss / (ci.len() - 1) as f64).sqrt() / (ci.len() as f64).sqrt()
        } else {
            0.0
        };
        rows.push(ValidationTableRow {
            process: process.label(),
            friends_overlap: mean(&fr),
            copy_influence: mean(&ci),
            std_err: se,
            runs_used: ci.len() as u32,
            runs_dropped: dropped,
        });
    }
    Ok(rows)
}

/// Parses a process spec: `ci`, `pp`, `ee`, or `mix:<p>`.
pub fn parse_process(s: &str, k: usize) -> CliResult<SynthProcess> {
    match s {
        "ci" => Ok(SynthProcess::CopyInfluence),
        "pp" => Ok(SynthProcess::PersonalPreference { k }),
        "ee" => Ok(SynthProcess::ExternalExposure),
        other => {
            if let Some(p) = other.strip_prefix("mix:") {
                let p: f64 = p
                    .parse()
                    .map_err(|_| CliError::usage(format!("bad mixture probability in `{other}`")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(CliError::usage(format!(
                        "mixture probability {p} outside [0, 1]"
                    )));
                }
                Ok(SynthProcess::Mixture { p_copy: p, k })
            } else {
                Err(CliError::usage(format!(
                    "unknown process `{other}` (expected ci|pp|ee|mix:<p>)"
                )))
            }
        }
    }
}
