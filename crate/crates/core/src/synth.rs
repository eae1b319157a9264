//! Semi-synthetic data generation: replace the items of a real post-split
//! action skeleton with items produced by known behavioral processes,
//! keeping the social network and timestamps intact. Running the estimator
//! on the result checks that it recovers the planted level of copying.
//!
//! Processes:
//! - **copy-influence**: draw uniformly from the distinct items among the
//!   friend set's last `m` actions (the feed a copier would see);
//! - **personal preference**: draw from the last `m` actions of the `k`
//!   most similar users by pre-split profile (fixed at the split time);
//! - **external exposure**: draw from the whole item universe weighted by
//!   current popularity, including the popularity of synthetic actions;
//! - **mixture**: per-action coin flip between copy-influence and personal
//!   preference.
//!
//! Generation walks the skeleton in chronological order and appends each
//! generated action to the evolving log, so later draws see earlier ones.
//! Empty process windows fall back to the external-exposure draw; the
//! fallback count is reported and gates validation runs.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::CoreError;
use crate::estimation::{estimate_user, KindPair, OverlapRecord};
use crate::feed::FeedModel;
use crate::matching::{match_all, MatchConfig};
use crate::model::{
    eligible_users, mask_to_users, ActivityLog, ActivityLogBuilder, ItemId, KindId, SocialGraph,
    SplitConfig, Timestamp, UserId,
};
use crate::rng::{derive_seed, rng_from};
use crate::similarity::{top_k_similar_all, Metric, ProfileStore};

/// A behavioral generator configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SynthProcess {
    CopyInfluence,
    PersonalPreference { k: usize },
    ExternalExposure,
    Mixture { p_copy: f64, k: usize },
}

impl SynthProcess {
    pub fn label(&self) -> String {
        use core::fmt::Write;
        let mut s = String::new();
        match self {
            SynthProcess::CopyInfluence => s.push_str("ci"),
            SynthProcess::PersonalPreference { .. } => s.push_str("pp"),
            SynthProcess::ExternalExposure => s.push_str("ee"),
            SynthProcess::Mixture { p_copy, .. } => {
                let _ = write!(s, "mix:{p_copy}");
            }
        }
        s
    }
}

/// Output of one generation pass.
#[derive(Clone, Debug)]
pub struct SynthOutcome {
    pub log: ActivityLog,
    /// Post-split actions generated (the skeleton size).
    pub generated: u64,
    /// Actions that fell back to the external-exposure draw because the
    /// process window was empty.
    pub fallbacks: u64,
}

impl SynthOutcome {
    pub fn fallback_rate(&self) -> f64 {
        if self.generated == 0 {
            0.0
        } else {
            self.fallbacks as f64 / self.generated as f64
        }
    }
}

/// Fenwick tree over per-item action counts for popularity-weighted draws.
pub struct PopularityIndex {
    tree: Vec<u64>,
    total: u64,
}

impl PopularityIndex {
    pub fn new(n_items: usize) -> Self {
        PopularityIndex {
            tree: vec![0; n_items + 1],
            total: 0,
        }
    }

    pub fn add(&mut self, item: ItemId, amount: u64) {
        let mut i = item.0 as usize + 1;
        while i < self.tree.len() {
            self.tree[i] += amount;
            i += i & i.wrapping_neg();
        }
        self.total += amount;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Item whose cumulative-count interval contains `target`
    /// (`0 <= target < total`).
    fn find(&self, mut target: u64) -> ItemId {
        let mut pos = 0usize;
        let mut mask = self.tree.len().next_power_of_two() >> 1;
        while mask > 0 {
            let next = pos + mask;
            if next < self.tree.len() && self.tree[next] <= target {
                target -= self.tree[next];
                pos = next;
            }
            mask >>= 1;
        }
        ItemId(pos as u32)
    }

    /// Draws an item proportional to its count; `None` on an empty index.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> Option<ItemId> {
        if self.total == 0 {
            return None;
        }
        Some(self.find(rng.random_range(0..self.total)))
    }
}

/// Distinct items among the last `m` events strictly before `t` (by the
/// total order) across the given users' evolving sequences.
fn window_items(
    evolving: &[Vec<(Timestamp, ItemId, u32)>],
    users: &[UserId],
    t: Timestamp,
    m: usize,
) -> Vec<ItemId> {
    let mut tail: Vec<(Timestamp, u32, ItemId, u32)> = Vec::new();
    for &w in users {
        let seq = &evolving[w.0 as usize];
        let cut = seq.partition_point(|e| e.0 < t);
        for &(time, item, ord) in &seq[cut.saturating_sub(m)..cut] {
            tail.push((time, w.0, item, ord));
        }
    }
    tail.sort_unstable_by(|a, b| b.cmp(a));
    tail.truncate(m);
    let mut items: Vec<ItemId> = tail.into_iter().map(|e| e.2).collect();
    items.sort_unstable();
    items.dedup();
    items
}

enum Step {
    Copy,
    Preference,
    External,
}

/// Replaces the items of every `kind` action at or after `t` with items
/// drawn by `process`, preserving users, timestamps, kinds, and all other
/// kinds' actions untouched. The `kind` log before `t` must be non-empty.
///
/// Two independent RNG streams are derived from the seed: one for mixture
/// process selection, one for item draws. A mixture with `p_copy = 0`
/// therefore reproduces the pure personal-preference output exactly under
/// the same seed.
pub fn generate(
    log: &ActivityLog,
    graph: &SocialGraph,
    t: Timestamp,
    kind: KindId,
    process: SynthProcess,
    m: usize,
    seed: u64,
) -> Result<SynthOutcome, CoreError> {
    let n_users = log.n_users();
    let n_items = max_item(log) + 1;

    // Evolving per-user sequences seeded with the pre-split actions of the
    // generated kind; popularity likewise counts only that kind.
    let kind_log = log.kind(kind);
    let mut skeleton: Vec<(Timestamp, UserId, u32)> = Vec::new();
    let mut evolving: Vec<Vec<(Timestamp, ItemId, u32)>> = vec![Vec::new(); n_users as usize];
    let mut popularity = PopularityIndex::new(n_items as usize);
    let mut pre_events = 0u64;
    for u in 0..n_users {
        for e in kind_log.events(UserId(u)) {
            if e.time < t {
                evolving[u as usize].push((e.time, e.item, e.seq));
                popularity.add(e.item, 1);
                pre_events += 1;
            } else {
                skeleton.push((e.time, UserId(u), e.seq));
            }
        }
    }
    if pre_events == 0 {
        return Err(CoreError::EmptyPreState);
    }
    skeleton.sort_unstable();

    // Personal-preference neighborhoods are fixed at the split time.
    let neighbors: Vec<Vec<UserId>> = match process {
        SynthProcess::PersonalPreference { k } | SynthProcess::Mixture { k, .. } => {
            let (pre, _) = log.split_at(t);
            let profiles = ProfileStore::build(&pre, kind);
            let mut active = vec![false; n_users as usize];
            for &(_, u, _) in &skeleton {
                active[u.0 as usize] = true;
            }
            top_k_similar_all(&profiles, &active, k)
        }
        _ => Vec::new(),
    };

    let mut select_rng = rng_from(derive_seed(seed, "synth-select", 0));
    let mut draw_rng = rng_from(derive_seed(seed, "synth-draw", 0));
    let mut items_by_seq: alloc::collections::BTreeMap<u32, ItemId> =
        alloc::collections::BTreeMap::new();
    let mut fallbacks = 0u64;

    for &(time, user, seq) in &skeleton {
        let step = match process {
            SynthProcess::CopyInfluence => Step::Copy,
            SynthProcess::PersonalPreference { .. } => Step::Preference,
            SynthProcess::ExternalExposure => Step::External,
            SynthProcess::Mixture { p_copy, .. } => {
                if select_rng.random::<f64>() < p_copy {
                    Step::Copy
                } else {
                    Step::Preference
                }
            }
        };
        let watched: &[UserId] = match step {
            Step::Copy => graph.neighbors(user),
            Step::Preference => &neighbors[user.0 as usize],
            Step::External => &[],
        };
        let item = match step {
            Step::External => popularity
                .draw(&mut draw_rng)
                .expect("pre-split events keep popularity non-empty"),
            _ => {
                let window = window_items(&evolving, watched, time, m);
                if window.is_empty() {
                    fallbacks += 1;
                    popularity
                        .draw(&mut draw_rng)
                        .expect("pre-split events keep popularity non-empty")
                } else {
                    window[draw_rng.random_range(0..window.len())]
                }
            }
        };
        evolving[user.0 as usize].push((time, item, seq));
        popularity.add(item, 1);
        items_by_seq.insert(seq, item);
    }

    // Reassemble in original input order: untouched actions pass through,
    // skeleton slots take their generated items.
    let mut builder = ActivityLogBuilder::new(n_users, log.kinds().to_vec());
    for (seq, a) in log.iter_actions_with_seq() {
        if a.kind == kind && a.time >= t {
            builder.push(a.user, items_by_seq[&seq], a.time, a.kind);
        } else {
            builder.push(a.user, a.item, a.time, a.kind);
        }
    }

    Ok(SynthOutcome {
        log: builder.build(),
        generated: skeleton.len() as u64,
        fallbacks,
    })
}

fn max_item(log: &ActivityLog) -> u32 {
    let mut max = 0u32;
    for (k, _) in log.kinds().iter().enumerate() {
        let kl = log.kind(KindId(k as u16));
        for u in 0..log.n_users() {
            for e in kl.events(UserId(u)) {
                max = max.max(e.item.0);
            }
        }
    }
    max
}

/// Parameters of the synthetic network-and-activity generator, a
/// desk-scale stand-in for a crawled dataset. Users are split into taste
/// clusters with disjoint item pools; within a cluster each user draws
/// from a taste window around a personal center, and edges can prefer
/// users with nearby centers, so homophily exists at two levels to be
/// controlled for.
#[derive(Clone, Copy, Debug)]
pub struct NetworkConfig {
    pub n_users: u32,
    pub n_items: u32,
    pub n_clusters: u32,
    /// Mean number of in-cluster friends per user.
    pub mean_in_degree: f64,
    /// Mean number of cross-cluster friends per user.
    pub mean_cross_degree: f64,
    /// Mean actions per user before the split; actual counts are uniform in
    /// `[(1 - spread) * mean, (1 + spread) * mean]`.
    pub pre_actions_per_user: u32,
    /// Mean actions per user after the split.
    pub post_actions_per_user: u32,
    /// Relative spread of per-user action counts.
    pub count_spread: f64,
    /// Width of each user's taste window as a fraction of the cluster
    /// pool; 1.0 means the whole pool (no intra-cluster structure).
    pub taste_width: f64,
    /// Fraction of in-cluster edges drawn between users with nearby taste
    /// centers instead of uniformly.
    pub edge_locality: f64,
    pub t_start: Timestamp,
    pub t_split: Timestamp,
    pub t_end: Timestamp,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            n_users: 600,
            n_items: 2400,
            n_clusters: 6,
            mean_in_degree: 8.0,
            mean_cross_degree: 0.5,
            pre_actions_per_user: 40,
            post_actions_per_user: 30,
            count_spread: 0.2,
            taste_width: 1.0,
            edge_locality: 0.0,
            t_start: 0,
            t_split: 1_000_000,
            t_end: 2_000_000,
        }
    }
}

impl NetworkConfig {
    pub fn cluster_of(&self, u: UserId) -> u32 {
        u.0 / self.n_users.div_ceil(self.n_clusters)
    }
}

/// Generates a clustered random graph plus a two-sided activity log with a
/// single kind named `"action"`. Pre- and post-split items are drawn from
/// the user's taste window inside the cluster pool, so pre-split profiles
/// carry planted taste and the post side provides a replaceable skeleton.
/// Byte-identical output under the same seed.
pub fn generate_network(cfg: &NetworkConfig, seed: u64) -> (ActivityLog, SocialGraph) {
    let mut rng = rng_from(derive_seed(seed, "network", 0));
    let users_per_cluster = cfg.n_users.div_ceil(cfg.n_clusters);
    let items_per_cluster = cfg.n_items / cfg.n_clusters;
    let tw = cfg.taste_width.clamp(0.0, 1.0);

    // Taste centers as positions on the cluster pool treated as a circle.
    let centers: Vec<f64> = (0..cfg.n_users).map(|_| rng.random::<f64>()).collect();
    // Per-cluster user lists sorted by center, for nearest-center lookups.
    let mut by_center: Vec<Vec<(f64, u32)>> = vec![Vec::new(); cfg.n_clusters as usize];
    for u in 0..cfg.n_users {
        by_center[(u / users_per_cluster) as usize].push((centers[u as usize], u));
    }
    for list in &mut by_center {
        list.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    // User whose center is nearest to `pos` on the circle, excluding `not`.
    let nearest = |list: &[(f64, u32)], pos: f64, not: u32| -> Option<u32> {
        if list.len() < 2 {
            return None;
        }
        let idx = list.partition_point(|&(c, _)| c < pos);
        let circ_dist = |c: f64| {
            let d = libm::fabs(c - pos);
            d.min(1.0 - d)
        };
        let mut best: Option<(f64, u32)> = None;
        for off in 0..list.len().min(4) {
            for cand in [
                list[(idx + off) % list.len()],
                list[(idx + list.len() - 1 - off) % list.len()],
            ] {
                if cand.1 == not {
                    continue;
                }
                let d = circ_dist(cand.0);
                if best.is_none() || (d, cand.1) < best.unwrap() {
                    best = Some((d, cand.1));
                }
            }
        }
        best.map(|(_, u)| u)
    };

    let mut edges: Vec<(UserId, UserId)> = Vec::new();
    for c in 0..cfg.n_clusters {
        let lo = c * users_per_cluster;
        let hi = (lo + users_per_cluster).min(cfg.n_users);
        let size = hi - lo;
        if size < 2 {
            continue;
        }
        let list = &by_center[c as usize];
        let n_edges = libm::round(size as f64 * cfg.mean_in_degree / 2.0) as u64;
        for _ in 0..n_edges {
            let a = lo + rng.random_range(0..size);
            let local = tw < 1.0 && rng.random::<f64>() < cfg.edge_locality;
            let b = if local {
                let pos = wrap(centers[a as usize] + (rng.random::<f64>() - 0.5) * tw);
                match nearest(list, pos, a) {
                    Some(b) => b,
                    None => continue,
                }
            } else {
                loop {
                    let b = lo + rng.random_range(0..size);
                    if b != a {
                        break b;
                    }
                }
            };
            edges.push((UserId(a), UserId(b)));
        }
    }
    let n_cross = libm::round(cfg.n_users as f64 * cfg.mean_cross_degree / 2.0) as u64;
    if cfg.n_users >= 2 {
        for _ in 0..n_cross {
            let a = rng.random_range(0..cfg.n_users);
            let b = loop {
                let b = rng.random_range(0..cfg.n_users);
                if b != a {
                    break b;
                }
            };
            edges.push((UserId(a), UserId(b)));
        }
    }
    let (graph, _) = SocialGraph::from_edges(cfg.n_users, edges);

    let mut builder = ActivityLogBuilder::new(cfg.n_users, vec![String::from("action")]);
    let spread = cfg.count_spread.clamp(0.0, 1.0);
    let count_around = |mean: u32, rng: &mut ChaCha8Rng| -> u32 {
        let lo = libm::floor((mean as f64) * (1.0 - spread)) as u32;
        let hi = libm::ceil((mean as f64) * (1.0 + spread)) as u32;
        if hi <= lo {
            mean
        } else {
            rng.random_range(lo..=hi)
        }
    };
    for u in 0..cfg.n_users {
        let cluster = u / users_per_cluster;
        let pool_lo = cluster * items_per_cluster;
        let center = centers[u as usize];
        let draw_item = |rng: &mut ChaCha8Rng| -> ItemId {
            let pos = if tw >= 1.0 {
                rng.random::<f64>()
            } else {
                wrap(center + (rng.random::<f64>() - 0.5) * tw)
            };
            let idx = (pos * items_per_cluster as f64) as u32;
            ItemId(pool_lo + idx.min(items_per_cluster - 1))
        };
        let n_pre = count_around(cfg.pre_actions_per_user, &mut rng);
        for _ in 0..n_pre {
            let item = draw_item(&mut rng);
            builder.push(
                UserId(u),
                item,
                rng.random_range(cfg.t_start..cfg.t_split),
                KindId(0),
            );
        }
        let n_post = count_around(cfg.post_actions_per_user, &mut rng);
        for _ in 0..n_post {
            let item = draw_item(&mut rng);
            builder.push(
                UserId(u),
                item,
                rng.random_range(cfg.t_split..cfg.t_end),
                KindId(0),
            );
        }
    }
    (builder.build(), graph)
}

fn wrap(x: f64) -> f64 {
    let y = x - libm::floor(x);
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// Estimator settings for a validation run.
#[derive(Clone, Copy, Debug)]
pub struct ValidationParams {
    pub m: usize,
    pub eps_s: f64,
    pub eps_a: f64,
    pub min_actions_total: u32,
    pub min_actions_each_side: u32,
    pub core_threshold: f64,
    pub metric: Metric,
    /// Runs with a fallback rate at or above this are dropped from the
    /// aggregate (the generated data no longer reflects the process).
    pub max_fallback_rate: f64,
}

impl Default for ValidationParams {
    fn default() -> Self {
        ValidationParams {
            m: 10,
            eps_s: 0.1,
            eps_a: 0.1,
            min_actions_total: 10,
            min_actions_each_side: 5,
            core_threshold: 0.75,
            metric: Metric::Jaccard,
            max_fallback_rate: 0.05,
        }
    }
}

/// Outcome of one generate-then-estimate pass.
#[derive(Clone, Debug)]
pub struct RunStats {
    pub mean_friends_overlap: f64,
    pub mean_copy_influence: f64,
    pub n_users: usize,
    pub fallback_rate: f64,
}

/// One aggregated row of the validation table.
#[derive(Clone, Debug)]
pub struct ValidationRow {
    pub process: String,
    pub mean_friends_overlap: f64,
    pub mean_copy_influence: f64,
    /// SE of the copy-influence grand mean across runs.
    pub std_err: f64,
    pub runs_used: u32,
    pub runs_dropped: u32,
}

/// Generates one synthetic world and runs the full matched-estimation
/// pipeline on it: split, profiles, eligibility, matching, per-user
/// estimation.
pub fn validation_single_run(
    log: &ActivityLog,
    graph: &SocialGraph,
    kind: KindId,
    process: SynthProcess,
    t: Timestamp,
    params: &ValidationParams,
    run_seed: u64,
) -> Result<RunStats, CoreError> {
    let synth = generate(
        log,
        graph,
        t,
        kind,
        process,
        params.m,
        derive_seed(run_seed, "gen", 0),
    )?;
    let records = pipeline_records(&synth.log, graph, kind, t, params, run_seed)?;
    let n = records.len();
    let (fr, ci) = records.iter().fold((0.0, 0.0), |acc, r| {
        (acc.0 + r.friends_overlap, acc.1 + r.copy_influence_raw)
    });
    Ok(RunStats {
        mean_friends_overlap: if n == 0 { 0.0 } else { fr / n as f64 },
        mean_copy_influence: if n == 0 { 0.0 } else { ci / n as f64 },
        n_users: n,
        fallback_rate: synth.fallback_rate(),
    })
}

/// The core match-then-estimate pipeline over one (possibly synthetic)
/// log, returning per-user records for eligible, fully-matched users.
pub fn pipeline_records(
    log: &ActivityLog,
    graph: &SocialGraph,
    kind: KindId,
    t: Timestamp,
    params: &ValidationParams,
    seed: u64,
) -> Result<Vec<OverlapRecord>, CoreError> {
    let mut split_cfg = SplitConfig::new(t);
    split_cfg.min_actions_total = params.min_actions_total;
    split_cfg.min_actions_each_side = params.min_actions_each_side;
    let eligible = eligible_users(log, graph, &split_cfg, params.core_threshold, kind)?;
    let users = mask_to_users(&eligible);
    let (pre, post) = log.split_at(t);
    let profiles = ProfileStore::build(&pre, kind);
    let cfg = MatchConfig {
        eps_s: params.eps_s,
        eps_a: params.eps_a,
        rng_seed: derive_seed(seed, "match", 0),
        max_candidates: None,
        coverage_required: 1.0,
        metric: params.metric,
    };
    let assignments = match_all(&users, graph, &profiles, &users, &cfg);
    let model = FeedModel::full(params.m);
    let kinds = KindPair::same(kind);
    let mut records = Vec::new();
    for a in &assignments {
        if let Ok(rec) = estimate_user(a.user, a, graph, &post, model, kinds) {
            records.push(rec);
        }
    }
    Ok(records)
}

/// Runs every process over every split time `n_runs` times with distinct
/// sub-seeds and reports grand means in the shape of the validation table.
/// The per-row SE is the standard deviation of run-level copy-influence
/// means divided by the square root of the number of runs used.
pub fn validation_run(
    log: &ActivityLog,
    graph: &SocialGraph,
    kind: KindId,
    processes: &[SynthProcess],
    t_list: &[Timestamp],
    n_runs: u32,
    params: &ValidationParams,
    master_seed: u64,
) -> Result<Vec<ValidationRow>, CoreError> {
    let mut rows = Vec::new();
    for (pi, &process) in processes.iter().enumerate() {
        let mut fr_means = Vec::new();
        let mut ci_means = Vec::new();
        let mut dropped = 0u32;
        for (ti, &t) in t_list.iter().enumerate() {
            for run in 0..n_runs {
                let run_seed = derive_seed(
                    master_seed,
                    "validate",
                    ((pi as u64) << 40) | ((ti as u64) << 20) | run as u64,
                );
                let stats =
                    validation_single_run(log, graph, kind, process, t, params, run_seed)?;
                if stats.fallback_rate >= params.max_fallback_rate || stats.n_users == 0 {
                    dropped += 1;
                    continue;
                }
                fr_means.push(stats.mean_friends_overlap);
                ci_means.push(stats.mean_copy_influence);
            }
        }
        let used = ci_means.len() as u32;
        let mean = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let se = if ci_means.len() >= 2 {
            let m = mean(&ci_means);
            let ss: f64 = ci_means.iter().map(|x| (x - m) * (x - m)).sum();
            libm::sqrt(ss / (ci_means.len() - 1) as f64) / libm::sqrt(ci_means.len() as f64)
        } else {
            0.0
        };
        rows.push(ValidationRow {
            process: process.label(),
            mean_friends_overlap: mean(&fr_means),
            mean_copy_influence: mean(&ci_means),
            std_err: se,
            runs_used: used,
            runs_dropped: dropped,
        });
    }
    Ok(rows)
}
