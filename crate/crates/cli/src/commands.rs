//! Command implementations behind the CLI surface. Each command builds a
//! run manifest up front (so its digest can stamp every output), does the
//! work, then writes the manifest with telemetry attached.

use std::path::{Path, PathBuf};

use serde_json::json;

use feedinf_core::model::KindId;
use feedinf_core::rng::derive_seed;
use feedinf_core::synth::{
    generate, generate_network, NetworkConfig, SynthProcess, ValidationParams,
};
use feedinf_core::Timestamp;

use crate::error::{CliError, CliResult};
use crate::ingest::{
    dataset_from_generated, dataset_stats, load_dataset, write_actions_file, write_degrees_file,
    write_edges_file, Dataset, DatasetManifest, IngestReport,
};
use crate::manifest::{RunManifest, Stopwatch};
use crate::output::{
    read_matches, summary_json, write_json, write_matches, write_per_user_csv,
    write_susceptibility_csv, write_sweep_csv, write_validation_csv, MatchFileMeta, SweepRow,
};
use crate::pipeline::{
    parse_process, resolve_t, run_estimation, run_matching, run_validation, PipelineParams, TSpec,
};
use crate::report::render_report;

/// Where the dataset comes from: flat files or the built-in generator.
pub enum DataSource {
    Files(DatasetManifest),
    Generated { cfg: NetworkConfig, seed: u64 },
}

impl DataSource {
    pub fn load(&self) -> CliResult<(Dataset, Option<IngestReport>)> {
        match self {
            DataSource::Files(manifest) => {
                let (ds, report) = load_dataset(manifest)?;
                Ok((ds, Some(report)))
            }
            DataSource::Generated { cfg, seed } => {
                let (log, graph) = generate_network(cfg, *seed);
                Ok((dataset_from_generated(log, graph), None))
            }
        }
    }

    pub fn input_paths(&self) -> Vec<&Path> {
        match self {
            DataSource::Files(m) => {
                let mut paths: Vec<&Path> =
                    m.actions.iter().map(|(p, _)| p.as_path()).collect();
                paths.push(m.edges.as_path());
                if let Some(d) = &m.declared_degrees {
                    paths.push(d.as_path());
                }
                paths
            }
            DataSource::Generated { .. } => Vec::new(),
        }
    }

    pub fn params_json(&self) -> serde_json::Value {
        match self {
            DataSource::Files(m) => json!({
                "source": "files",
                "lenient": m.lenient,
                "min_rating": m.min_rating,
                "kinds": m.kinds,
            }),
            DataSource::Generated { cfg, seed } => json!({
                "source": "generated",
                "gen_seed": seed,
                "n_users": cfg.n_users,
                "n_items": cfg.n_items,
                "n_clusters": cfg.n_clusters,
                "mean_in_degree": cfg.mean_in_degree,
                "mean_cross_degree": cfg.mean_cross_degree,
                "pre_actions_per_user": cfg.pre_actions_per_user,
                "post_actions_per_user": cfg.post_actions_per_user,
                "count_spread": cfg.count_spread,
                "taste_width": cfg.taste_width,
                "edge_locality": cfg.edge_locality,
                "t_start": cfg.t_start,
                "t_split": cfg.t_split,
                "t_end": cfg.t_end,
            }),
        }
    }

    /// The generator's own split time, used as the default `T`.
    pub fn default_t(&self) -> Option<Timestamp> {
        match self {
            DataSource::Generated { cfg, .. } => Some(cfg.t_split),
            DataSource::Files(_) => None,
        }
    }
}

/// Fills kind defaults once the dataset is known: a single-kind dataset
/// needs no explicit kind flags.
pub fn resolve_kinds(ds: &Dataset, params: &mut PipelineParams) -> CliResult<()> {
    let kinds = ds.log.kinds();
    let only = if kinds.len() == 1 { Some(kinds[0].clone()) } else { None };
    for (field, value) in [
        ("exposure-kind", &mut params.exposure_kind),
        ("target-kind", &mut params.target_kind),
    ] {
        if value == "action" && ds.log.kind_id(value).is_none() {
            match &only {
                Some(k) => *value = k.clone(),
                None => {
                    return Err(CliError::usage(format!(
                        "--{field} is required for a multi-kind dataset (kinds: {})",
                        kinds.join(", ")
                    )));
                }
            }
        }
    }
    Ok(())
}

pub fn cmd_ingest(source: &DataSource, out: Option<&Path>) -> CliResult<()> {
    let watch = Stopwatch::start();
    let (ds, report) = source.load()?;
    let mut manifest = RunManifest::new(
        "ingest",
        source.params_json(),
        &source.input_paths(),
        0,
    )?;
    let stats = dataset_stats(&ds.log, &ds.graph);
    let doc = json!({
        "manifest_digest": manifest.digest(),
        "stats": stats,
        "ingest_report": report,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&doc).map_err(|e| CliError::Runtime(e.into()))?
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("stats.json"), &doc)?;
        manifest.telemetry = watch.telemetry();
        manifest.write(dir)?;
    }
    Ok(())
}

pub fn cmd_match(
    source: &DataSource,
    tspec: TSpec,
    params: &mut PipelineParams,
    out: &Path,
) -> CliResult<()> {
    let watch = Stopwatch::start();
    let (ds, _) = source.load()?;
    resolve_kinds(&ds, params)?;
    let t = resolve_t(&ds.log, tspec)?;
    let mut manifest = RunManifest::new(
        "match",
        json!({
            "data": source.params_json(),
            "t": t,
            "pipeline": params,
        }),
        &source.input_paths(),
        params.seed,
    )?;
    let output = run_matching(&ds, t, params)?;
    let meta = MatchFileMeta {
        manifest_digest: manifest.digest().to_string(),
        tool_version: manifest.tool_version.clone(),
        t,
        eps_s: params.eps_s,
        eps_a: params.eps_a,
        seed: params.seed,
        metric: params.metric.clone(),
        match_kind: params.match_kind_name().to_string(),
        coverage_required: params.coverage_required,
        n_eligible: output.eligible.len(),
    };
    write_matches(out, &meta, &output.assignments, &ds)?;
    let matched = output.assignments.iter().filter(|a| !a.excluded).count();
    eprintln!(
        "matched {matched}/{} eligible users at t={t} (output: {})",
        output.eligible.len(),
        out.display()
    );
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        manifest.telemetry = watch.telemetry();
        manifest.write(dir)?;
    }
    Ok(())
}

pub fn cmd_estimate(
    source: &DataSource,
    matches_path: &Path,
    params: &mut PipelineParams,
    out_dir: &Path,
) -> CliResult<()> {
    let watch = Stopwatch::start();
    let (ds, _) = source.load()?;
    resolve_kinds(&ds, params)?;
    let (meta, assignments) = read_matches(matches_path, &ds)?;
    let mut inputs = source.input_paths();
    inputs.push(matches_path);
    let mut manifest = RunManifest::new(
        "estimate",
        json!({
            "data": source.params_json(),
            "t": meta.t,
            "matches_digest": meta.manifest_digest,
            "pipeline": params,
        }),
        &inputs,
        params.seed,
    )?;
    let est = run_estimation(&ds, meta.t, &assignments, params)?;
    std::fs::create_dir_all(out_dir)?;
    write_per_user_csv(&out_dir.join("per_user.csv"), manifest.digest(), &est.records, &ds)?;
    write_json(
        &out_dir.join("summary.json"),
        &summary_json(manifest.digest(), meta.t, params, &est),
    )?;
    write_susceptibility_csv(
        &out_dir.join("susceptibility.csv"),
        manifest.digest(),
        &est.bins,
    )?;
    eprintln!(
        "estimated {} users (skipped: {} excluded, {} without post-split actions)",
        est.records.len(),
        est.skipped_excluded,
        est.skipped_no_actions
    );
    eprintln!(
        "mean friends-overlap {:.6}, copy-influence {:.6} (se {:.6})",
        est.summary.mean_friends_overlap,
        est.summary.mean_copy_influence_raw,
        est.summary.bootstrap_se
    );
    manifest.telemetry = watch.telemetry();
    manifest.write(out_dir)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_synth(
    source: &DataSource,
    process_spec: &str,
    k: usize,
    m: usize,
    runs: u32,
    t_list: &[Timestamp],
    seed: u64,
    out_dir: &Path,
) -> CliResult<()> {
    let watch = Stopwatch::start();
    let process = parse_process(process_spec, k)?;
    let (ds, _) = source.load()?;
    let kind = single_kind(&ds)?;
    let mut manifest = RunManifest::new(
        "synth",
        json!({
            "data": source.params_json(),
            "process": process_spec,
            "k": k,
            "m": m,
            "runs": runs,
            "t_list": t_list,
        }),
        &source.input_paths(),
        seed,
    )?;
    std::fs::create_dir_all(out_dir)?;
    let digest = manifest.digest().to_string();

    // The social graph is shared by every run; each run adds only its
    // generated actions file.
    write_edges_file(&ds, &out_dir.join("edges.csv"), Some(&digest))?;
    if ds.graph.has_declared_degrees() {
        write_degrees_file(&ds, &out_dir.join("degrees.csv"), Some(&digest))?;
    }

    let mut diag = format!("# manifest={digest}\n");
    diag.push_str("run,t,generated,fallbacks,fallback_rate\n");
    for (ti, &t) in t_list.iter().enumerate() {
        for run in 0..runs {
            let run_seed = derive_seed(seed, "synth", ((ti as u64) << 32) | run as u64);
            let outcome = generate(&ds.log, &ds.graph, t, kind, process, m, run_seed)
                .map_err(|e| CliError::data(e.to_string()))?;
            let name = format!("actions_r{run}_t{t}.csv");
            write_actions_file(&outcome.log, &ds, &out_dir.join(&name), Some(&digest))?;
            diag.push_str(&format!(
                "{run},{t},{},{},{}\n",
                outcome.generated,
                outcome.fallbacks,
                outcome.fallback_rate()
            ));
        }
    }
    std::fs::write(out_dir.join("diagnostics.csv"), diag)?;
    manifest.telemetry = watch.telemetry();
    manifest.write(out_dir)?;
    eprintln!(
        "wrote {} synthetic action files to {}",
        runs as usize * t_list.len(),
        out_dir.display()
    );
    Ok(())
}

fn single_kind(ds: &Dataset) -> CliResult<KindId> {
    let kinds = ds.log.kinds();
    if kinds.len() == 1 {
        Ok(KindId(0))
    } else {
        Err(CliError::usage(format!(
            "generation needs a single-kind dataset (found: {})",
            kinds.join(", ")
        )))
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_validate(
    source: &DataSource,
    process_specs: &[String],
    k: usize,
    runs: u32,
    t_list: &[Timestamp],
    vparams: &ValidationParams,
    seed: u64,
    out_dir: &Path,
) -> CliResult<()> {
    let watch = Stopwatch::start();
    let processes: Vec<SynthProcess> = process_specs
        .iter()
        .map(|s| parse_process(s, k))
        .collect::<CliResult<Vec<_>>>()?;
    let (ds, _) = source.load()?;
    let kind = single_kind(&ds)?;
    let mut manifest = RunManifest::new(
        "validate",
        json!({
            "data": source.params_json(),
            "processes": process_specs,
            "k": k,
            "runs": runs,
            "t_list": t_list,
            "m": vparams.m,
            "eps_s": vparams.eps_s,
            "eps_a": vparams.eps_a,
            "max_fallback_rate": vparams.max_fallback_rate,
        }),
        &source.input_paths(),
        seed,
    )?;
    let rows = run_validation(
        &ds.log, &ds.graph, kind, &processes, t_list, runs, vparams, seed,
    )?;
    std::fs::create_dir_all(out_dir)?;
    write_validation_csv(&out_dir.join("validation.csv"), manifest.digest(), &rows)?;
    println!("process,friends_overlap,copy_influence,std_err");
    for r in &rows {
        println!(
            "{},{:.6},{:.6},{:.6}",
            r.process, r.friends_overlap, r.copy_influence, r.std_err
        );
    }
    manifest.telemetry = watch.telemetry();
    manifest.write(out_dir)?;
    Ok(())
}

pub fn cmd_sweep(
    source: &DataSource,
    param: &str,
    values: &[String],
    tspec: TSpec,
    base: &PipelineParams,
    out_dir: &Path,
) -> CliResult<()> {
    let watch = Stopwatch::start();
    if !["m", "t", "eps-s", "eps-a"].contains(&param) {
        return Err(CliError::usage(format!(
            "unknown sweep parameter `{param}` (expected m|t|eps-s|eps-a)"
        )));
    }
    let (ds, _) = source.load()?;
    let mut base = base.clone();
    resolve_kinds(&ds, &mut base)?;
    let mut manifest = RunManifest::new(
        "sweep",
        json!({
            "data": source.params_json(),
            "param": param,
            "values": values,
            "pipeline": base,
        }),
        &source.input_paths(),
        base.seed,
    )?;
    std::fs::create_dir_all(out_dir)?;
    let digest = manifest.digest().to_string();
    let base_t = resolve_t(&ds.log, tspec)?;

    let mut rows: Vec<SweepRow> = Vec::new();
    let mut failure: Option<CliError> = None;
    for value in values {
        let mut params = base.clone();
        let mut t = base_t;
        let parse_err =
            |v: &str| CliError::usage(format!("bad value `{v}` for sweep parameter {param}"));
        match param {
            "m" => params.m = value.parse().map_err(|_| parse_err(value))?,
            "t" => t = value.parse().map_err(|_| parse_err(value))?,
            "eps-s" => params.eps_s = value.parse().map_err(|_| parse_err(value))?,
            "eps-a" => params.eps_a = value.parse().map_err(|_| parse_err(value))?,
            _ => unreachable!(),
        }
        let result = (|| -> CliResult<SweepRow> {
            let matches = run_matching(&ds, t, &params)?;
            let est = run_estimation(&ds, t, &matches.assignments, &params)?;
            let value_dir = out_dir.join(format!("{param}_{value}"));
            std::fs::create_dir_all(&value_dir)?;
            write_per_user_csv(&value_dir.join("per_user.csv"), &digest, &est.records, &ds)?;
            write_json(
                &value_dir.join("summary.json"),
                &summary_json(&digest, t, &params, &est),
            )?;
            let s = &est.summary;
            Ok(SweepRow {
                param: param.to_string(),
                value: value.clone(),
                n_users: s.n_users,
                mean_friends_overlap: s.mean_friends_overlap,
                mean_copy_influence_raw: s.mean_copy_influence_raw,
                mean_copy_influence_clamped: s.mean_copy_influence_clamped,
                bootstrap_se: s.bootstrap_se,
                fr_ci_ratio: (param == "m").then(|| {
                    if s.mean_copy_influence_raw == 0.0 {
                        f64::NAN
                    } else {
                        s.mean_friends_overlap / s.mean_copy_influence_raw
                    }
                }),
            })
        })();
        match result {
            Ok(row) => rows.push(row),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    // Partial results are preserved even when a run fails.
    write_sweep_csv(&out_dir.join("sweep.csv"), &digest, &rows)?;
    manifest.telemetry = watch.telemetry();
    manifest.write(out_dir)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn cmd_report(results: &Path, out_dir: &Path) -> CliResult<()> {
    let written = render_report(results, out_dir)?;
    eprintln!("wrote {} files to {}", written.len(), out_dir.display());
    Ok(())
}

/// Parses `path[:kind]` action-file specs.
pub fn parse_action_spec(spec: &str) -> (PathBuf, Option<String>) {
    if let Some((path, kind)) = spec.rsplit_once(':') {
        if !kind.is_empty() && !kind.contains('/') && !kind.contains('.') && !path.is_empty() {
            return (PathBuf::from(path), Some(kind.to_string()));
        }
    }
    (PathBuf::from(spec), None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_spec_parsing() {
        let (p, k) = parse_action_spec("data/loves.csv:love");
        assert_eq!(p, PathBuf::from("data/loves.csv"));
        assert_eq!(k.as_deref(), Some("love"));
        let (p, k) = parse_action_spec("data/actions.v2.csv");
        assert_eq!(p, PathBuf::from("data/actions.v2.csv"));
        assert_eq!(k, None);
    }
}
