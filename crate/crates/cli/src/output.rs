//! Output file formats: the matches file (JSON lines), per-user CSV,
//! summary JSON, susceptibility CSV, validation and sweep tables. Every
//! file names the manifest digest that produced it; all numeric formatting
//! is deterministic.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use feedinf_core::estimation::{ActivityBin, EstimateSummary, OverlapRecord};
use feedinf_core::matching::{MatchAssignment, MatchedPair};
use feedinf_core::model::UserId;

use crate::error::{CliError, CliResult};
use crate::ingest::Dataset;
use crate::pipeline::{EstimateOutput, PipelineParams, ValidationTableRow};

/// First line of a matches file: the parameters estimation must agree on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchFileMeta {
    pub manifest_digest: String,
    pub tool_version: String,
    pub t: i64,
    pub eps_s: f64,
    pub eps_a: f64,
    pub seed: u64,
    pub metric: String,
    pub match_kind: String,
    pub coverage_required: f64,
    pub n_eligible: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchFilePair {
    pub friend: String,
    pub stranger: String,
    pub sim_friend: f64,
    pub sim_stranger: f64,
    pub count_friend: u32,
    pub count_stranger: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchFileRecord {
    pub user: String,
    pub coverage: f64,
    pub excluded: bool,
    pub candidates_tested: u32,
    pub cap_hit: bool,
    pub pairs: Vec<MatchFilePair>,
}

/// Writes the matches file: one meta line, then one JSON record per user.
pub fn write_matches(
    path: &Path,
    meta: &MatchFileMeta,
    assignments: &[MatchAssignment],
    ds: &Dataset,
) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    let meta_line = serde_json::json!({ "meta": meta });
    writeln!(w, "{meta_line}")?;
    for a in assignments {
        let record = MatchFileRecord {
            user: ds.users.name(a.user.0).to_string(),
            coverage: a.coverage,
            excluded: a.excluded,
            candidates_tested: a.candidates_tested,
            cap_hit: a.cap_hit,
            pairs: a
                .pairs
                .iter()
                .map(|p| MatchFilePair {
                    friend: ds.users.name(p.friend.0).to_string(),
                    stranger: ds.users.name(p.stranger.0).to_string(),
                    sim_friend: p.sim_friend,
                    sim_stranger: p.sim_stranger,
                    count_friend: p.count_friend,
                    count_stranger: p.count_stranger,
                })
                .collect(),
        };
        writeln!(
            w,
            "{}",
            serde_json::to_string(&record).map_err(|e| CliError::Runtime(e.into()))?
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matches file back, resolving user names against the dataset.
pub fn read_matches(path: &Path, ds: &Dataset) -> CliResult<(MatchFileMeta, Vec<MatchAssignment>)> {
    let file = File::open(path).map_err(|e| {
        CliError::Runtime(anyhow::anyhow!("cannot open {}: {e}", path.display()))
    })?;
    let mut lines = BufReader::new(file).lines();
    let meta_line = lines
        .next()
        .ok_or_else(|| CliError::data(format!("{}: empty matches file", path.display())))??;
    #[derive(Deserialize)]
    struct MetaWrap {
        meta: MatchFileMeta,
    }
    let meta: MetaWrap = serde_json::from_str(&meta_line)
        .map_err(|e| CliError::data(format!("{}:1: bad meta line: {e}", path.display())))?;
    let mut assignments = Vec::new();
    let resolve = |name: &str, line: usize| {
        ds.users
            .get(name)
            .map(UserId)
            .ok_or_else(|| {
                CliError::data(format!(
                    "{}:{line}: user `{name}` not present in the dataset",
                    path.display()
                ))
            })
    };
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 2;
        let rec: MatchFileRecord = serde_json::from_str(&line)
            .map_err(|e| CliError::data(format!("{}:{line_no}: {e}", path.display())))?;
        let user = resolve(&rec.user, line_no)?;
        let mut pairs = Vec::with_capacity(rec.pairs.len());
        for p in &rec.pairs {
            pairs.push(MatchedPair {
                friend: resolve(&p.friend, line_no)?,
                stranger: resolve(&p.stranger, line_no)?,
                sim_friend: p.sim_friend,
                sim_stranger: p.sim_stranger,
                count_friend: p.count_friend,
                count_stranger: p.count_stranger,
            });
        }
        assignments.push(MatchAssignment {
            user,
            pairs,
            coverage: rec.coverage,
            excluded: rec.excluded,
            candidates_tested: rec.candidates_tested,
            cap_hit: rec.cap_hit,
        });
    }
    Ok((meta.meta, assignments))
}

/// Per-user records CSV: `user,friends_overlap,strangers_overlap,raw,clamped,n_post_actions`.
pub fn write_per_user_csv(
    path: &Path,
    digest: &str,
    records: &[OverlapRecord],
    ds: &Dataset,
) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# manifest={digest}")?;
    writeln!(
        w,
        "user,friends_overlap,strangers_overlap,raw,clamped,n_post_actions"
    )?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            ds.users.name(r.user.0),
            r.friends_overlap,
            r.strangers_overlap,
            r.copy_influence_raw,
            r.copy_influence_clamped,
            r.n_post_actions
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Row shape of the per-user CSV, for readers.
#[derive(Debug, Clone)]
pub struct PerUserRow {
    pub user: String,
    pub friends_overlap: f64,
    pub strangers_overlap: f64,
    pub raw: f64,
    pub clamped: f64,
    pub n_post_actions: u64,
}

pub fn read_per_user_csv(path: &Path) -> CliResult<Vec<PerUserRow>> {
    let file = File::open(path).map_err(|e| {
        CliError::Runtime(anyhow::anyhow!("cannot open {}: {e}", path.display()))
    })?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.starts_with("user,") || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(CliError::data(format!(
                "{}:{}: expected 6 columns",
                path.display(),
                i + 1
            )));
        }
        let parse_f = |s: &str| -> CliResult<f64> {
            s.parse()
                .map_err(|_| CliError::data(format!("{}:{}: bad number `{s}`", path.display(), i + 1)))
        };
        rows.push(PerUserRow {
            user: f[0].to_string(),
            friends_overlap: parse_f(f[1])?,
            strangers_overlap: parse_f(f[2])?,
            raw: parse_f(f[3])?,
            clamped: parse_f(f[4])?,
            n_post_actions: f[5].parse().map_err(|_| {
                CliError::data(format!("{}:{}: bad count `{}`", path.display(), i + 1, f[5]))
            })?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryJson {
    pub manifest_digest: String,
    pub t: i64,
    pub m: usize,
    pub feed_mode: String,
    pub exposure_kind: String,
    pub target_kind: String,
    pub n_users: usize,
    pub n_bootstrap: u32,
    pub mean_friends_overlap: f64,
    pub mean_copy_influence_raw: f64,
    pub mean_copy_influence_clamped: f64,
    pub bootstrap_se: f64,
    pub fraction_zero_friends_overlap: f64,
    pub fraction_nonpositive_influence: f64,
    pub skipped_excluded: usize,
    pub skipped_no_post_actions: usize,
}

pub fn summary_json(
    digest: &str,
    t: i64,
    params: &PipelineParams,
    est: &EstimateOutput,
) -> SummaryJson {
    let s: &EstimateSummary = &est.summary;
    SummaryJson {
        manifest_digest: digest.to_string(),
        t,
        m: params.m,
        feed_mode: params.feed_mode.clone(),
        exposure_kind: params.exposure_kind.clone(),
        target_kind: params.target_kind.clone(),
        n_users: s.n_users,
        n_bootstrap: s.n_bootstrap,
        mean_friends_overlap: s.mean_friends_overlap,
        mean_copy_influence_raw: s.mean_copy_influence_raw,
        mean_copy_influence_clamped: s.mean_copy_influence_clamped,
        bootstrap_se: s.bootstrap_se,
        fraction_zero_friends_overlap: s.fraction_zero_friends_overlap,
        fraction_nonpositive_influence: s.fraction_nonpositive_influence,
        skipped_excluded: est.skipped_excluded,
        skipped_no_post_actions: est.skipped_no_actions,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let json =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.into()))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

/// Susceptibility CSV: `bin_lo,bin_hi,n_users,mean_influence,se`.
pub fn write_susceptibility_csv(path: &Path, digest: &str, bins: &[ActivityBin]) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# manifest={digest}")?;
    writeln!(w, "bin_lo,bin_hi,n_users,mean_influence,se")?;
    for b in bins {
        writeln!(
            w,
            "{},{},{},{},{}",
            b.lo, b.hi, b.n_users, b.mean_influence, b.se
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Validation table CSV: one row per process, Table-2 shaped.
pub fn write_validation_csv(
    path: &Path,
    digest: &str,
    rows: &[ValidationTableRow],
) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# manifest={digest}")?;
    writeln!(
        w,
        "process,friends_overlap,copy_influence,std_err,runs_used,runs_dropped"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.process, r.friends_overlap, r.copy_influence, r.std_err, r.runs_used, r.runs_dropped
        )?;
    }
    w.flush()?;
    Ok(())
}

/// One sweep row: the swept value plus the run's summary numbers.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: String,
    pub n_users: usize,
    pub mean_friends_overlap: f64,
    pub mean_copy_influence_raw: f64,
    pub mean_copy_influence_clamped: f64,
    pub bootstrap_se: f64,
    /// friends-overlap over copy-influence, for budget sweeps.
    pub fr_ci_ratio: Option<f64>,
}

pub fn write_sweep_csv(path: &Path, digest: &str, rows: &[SweepRow]) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# manifest={digest}")?;
    let with_ratio = rows.iter().any(|r| r.fr_ci_ratio.is_some());
    if with_ratio {
        writeln!(
            w,
            "param,value,n_users,mean_friends_overlap,mean_copy_influence_raw,mean_copy_influence_clamped,bootstrap_se,fr_ci_ratio"
        )?;
    } else {
        writeln!(
            w,
            "param,value,n_users,mean_friends_overlap,mean_copy_influence_raw,mean_copy_influence_clamped,bootstrap_se"
        )?;
    }
    for r in rows {
        write!(
            w,
            "{},{},{},{},{},{},{}",
            r.param,
            r.value,
            r.n_users,
            r.mean_friends_overlap,
            r.mean_copy_influence_raw,
            r.mean_copy_influence_clamped,
            r.bootstrap_se
        )?;
        if with_ratio {
            match r.fr_ci_ratio {
                Some(x) => writeln!(w, ",{x}")?,
                None => writeln!(w, ",")?,
            }
        } else {
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}
