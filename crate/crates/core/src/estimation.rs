//! Estimation phase: per-user and network-level copy-influence with
//! bootstrap uncertainty, plus activity-binned susceptibility.
//!
//! Everything here runs on the post-split log only; the pre-split data
//! enters solely through the [`MatchAssignment`] produced by the matching
//! phase.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::CoreError;
use crate::feed::{overlap, FeedModel};
use crate::matching::{match_strangers, MatchConfig};
use crate::model::{ActivityLog, KindId, SocialGraph, UserId};
use crate::rng::{derive_seed, rng_from};
use crate::similarity::ProfileStore;

/// Exposure kind fills the feed; target kind is counted against it. The
/// two coincide for same-kind analyses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KindPair {
    pub exposure: KindId,
    pub target: KindId,
}

impl KindPair {
    pub fn same(kind: KindId) -> Self {
        KindPair {
            exposure: kind,
            target: kind,
        }
    }
}

/// Per-user overlap and copy-influence values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverlapRecord {
    pub user: UserId,
    pub friends_overlap: f64,
    pub strangers_overlap: f64,
    /// `friends_overlap - strangers_overlap`, in [-1, 1].
    pub copy_influence_raw: f64,
    /// `max(0, raw)`: a negative estimate reads as "no copy-influence".
    pub copy_influence_clamped: f64,
    pub n_post_actions: u64,
    pub coverage: f64,
}

/// Why a user produced no record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkipReason {
    /// Matching coverage fell below the requirement.
    Excluded,
    /// No post-split actions of the target kind; overlap is undefined.
    NoPostActions,
}

/// Network-level summary over per-user records.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateSummary {
    pub mean_friends_overlap: f64,
    pub mean_copy_influence_raw: f64,
    pub mean_copy_influence_clamped: f64,
    /// Bootstrap standard error of the mean raw copy-influence.
    pub bootstrap_se: f64,
    pub n_users: usize,
    pub n_bootstrap: u32,
    pub fraction_zero_friends_overlap: f64,
    pub fraction_nonpositive_influence: f64,
}

/// Computes one user's overlap record: the friends feed uses the user's
/// adjacency, the strangers feed uses the matched strangers, both under
/// the same feed model and kinds. Only actions at or after the split time
/// `t` are counted; feed windows see every earlier exposure event.
pub fn estimate_user(
    u: UserId,
    assignment: &crate::matching::MatchAssignment,
    graph: &SocialGraph,
    log: &ActivityLog,
    t: crate::model::Timestamp,
    model: FeedModel,
    kinds: KindPair,
) -> Result<OverlapRecord, SkipReason> {
    if assignment.excluded {
        return Err(SkipReason::Excluded);
    }
    let friends = graph.neighbors(u);
    let strangers = assignment.strangers();
    let fr = overlap(u, friends, log, model, kinds.exposure, kinds.target, t)
        .ok_or(SkipReason::NoPostActions)?;
    let st = overlap(u, &strangers, log, model, kinds.exposure, kinds.target, t)
        .map(|c| c.fraction())
        .unwrap_or(0.0);
    let friends_overlap = fr.fraction();
    let raw = friends_overlap - st;
    Ok(OverlapRecord {
        user: u,
        friends_overlap,
        strangers_overlap: st,
        copy_influence_raw: raw,
        copy_influence_clamped: raw.max(0.0),
        n_post_actions: fr.total,
        coverage: assignment.coverage,
    })
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    libm::sqrt(ss / (values.len() - 1) as f64)
}

/// Standard deviation of the mean across `n_bootstrap` resamples of
/// `values` with replacement; deterministic under the seed.
pub fn bootstrap_se_of_mean(values: &[f64], n_bootstrap: u32, seed: u64) -> f64 {
    if values.len() < 2 || n_bootstrap == 0 {
        return 0.0;
    }
    let mut rng = rng_from(seed);
    let n = values.len();
    let mut replicate_means = Vec::with_capacity(n_bootstrap as usize);
    for _ in 0..n_bootstrap {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += values[rng.random_range(0..n)];
        }
        replicate_means.push(sum / n as f64);
    }
    sample_sd(&replicate_means)
}

/// Aggregates per-user records into the network estimate. The headline is
/// the mean raw copy-influence; the clamped mean is reported alongside so
/// both readings of negative per-user estimates are always visible.
pub fn network_estimate(
    records: &[OverlapRecord],
    n_bootstrap: u32,
    seed: u64,
) -> Result<EstimateSummary, CoreError> {
    if records.len() < 2 {
        return Err(CoreError::TooFewRecords {
            got: records.len(),
        });
    }
    let raw: Vec<f64> = records.iter().map(|r| r.copy_influence_raw).collect();
    let n = records.len();
    Ok(EstimateSummary {
        mean_friends_overlap: mean(
            &records.iter().map(|r| r.friends_overlap).collect::<Vec<f64>>(),
        ),
        mean_copy_influence_raw: mean(&raw),
        mean_copy_influence_clamped: mean(
            &records
                .iter()
                .map(|r| r.copy_influence_clamped)
                .collect::<Vec<f64>>(),
        ),
        bootstrap_se: bootstrap_se_of_mean(&raw, n_bootstrap, seed),
        n_users: n,
        n_bootstrap,
        fraction_zero_friends_overlap: records
            .iter()
            .filter(|r| r.friends_overlap == 0.0)
            .count() as f64
            / n as f64,
        fraction_nonpositive_influence: records
            .iter()
            .filter(|r| r.copy_influence_raw <= 0.0)
            .count() as f64
            / n as f64,
    })
}

/// Result of repeated re-matching for one user.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerUserSe {
    pub se: f64,
    pub completed: u32,
    pub missing: u32,
}

/// Standard error of a user's copy-influence under fresh stranger
/// selections: the estimate is recomputed `n_repeats` times with new
/// matching sub-seeds, and the SE is the standard deviation of the raw
/// values divided by the square root of the completed repeats.
#[allow(clippy::too_many_arguments)]
pub fn per_user_se(
    u: UserId,
    n_repeats: u32,
    graph: &SocialGraph,
    profiles: &ProfileStore,
    pool: &[UserId],
    cfg: &MatchConfig,
    post: &ActivityLog,
    model: FeedModel,
    kinds: KindPair,
) -> PerUserSe {
    let mut values = Vec::with_capacity(n_repeats as usize);
    let mut missing = 0u32;
    for rep in 0..n_repeats {
        let rep_cfg = MatchConfig {
            rng_seed: derive_seed(cfg.rng_seed, "per-user-se", rep as u64),
            ..*cfg
        };
        let assignment = match_strangers(u, graph, profiles, pool, &rep_cfg);
        match estimate_user(u, &assignment, graph, post, model, kinds) {
            Ok(rec) => values.push(rec.copy_influence_raw),
            Err(_) => missing += 1,
        }
    }
    let completed = values.len() as u32;
    let se = if completed >= 2 {
        sample_sd(&values) / libm::sqrt(completed as f64)
    } else {
        0.0
    };
    PerUserSe {
        se,
        completed,
        missing,
    }
}

/// One activity bin of the susceptibility curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivityBin {
    /// Bin covers `lo <= n_post_actions < hi`.
    pub lo: u64,
    pub hi: u64,
    pub n_users: usize,
    pub mean_influence: f64,
    pub se: f64,
}

/// Bins users by post-split action count and reports per-bin mean raw
/// copy-influence with a bootstrap SE. Bins holding fewer than `min_users`
/// are dropped. `bin_edges` must be strictly increasing; edge `i` and
/// `i + 1` delimit bin `i` as a half-open interval.
pub fn susceptibility_by_activity(
    records: &[OverlapRecord],
    bin_edges: &[u64],
    min_users: usize,
    n_bootstrap: u32,
    seed: u64,
) -> Vec<ActivityBin> {
    debug_assert!(bin_edges.windows(2).all(|w| w[0] < w[1]));
    let mut bins = Vec::new();
    for (i, edge) in bin_edges.windows(2).enumerate() {
        let (lo, hi) = (edge[0], edge[1]);
        let values: Vec<f64> = records
            .iter()
            .filter(|r| r.n_post_actions >= lo && r.n_post_actions < hi)
            .map(|r| r.copy_influence_raw)
            .collect();
        if values.len() < min_users {
            continue;
        }
        bins.push(ActivityBin {
            lo,
            hi,
            n_users: values.len(),
            mean_influence: mean(&values),
            se: bootstrap_se_of_mean(&values, n_bootstrap, derive_seed(seed, "bin", i as u64)),
        });
    }
    bins
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::MatchAssignment;
    use crate::model::{ActivityLogBuilder, ItemId};
    use crate::rng::rng_from;
    use alloc::string::String;
    use alloc::vec;
    use rand::Rng;

    fn record(user: u32, fr: f64, st: f64, n_post: u64) -> OverlapRecord {
        OverlapRecord {
            user: UserId(user),
            friends_overlap: fr,
            strangers_overlap: st,
            copy_influence_raw: fr - st,
            copy_influence_clamped: (fr - st).max(0.0),
            n_post_actions: n_post,
            coverage: 1.0,
        }
    }

    fn bare_assignment(user: u32, strangers: &[u32]) -> MatchAssignment {
        MatchAssignment {
            user: UserId(user),
            pairs: strangers
                .iter()
                .map(|&s| crate::matching::MatchedPair {
                    friend: UserId(s), // friend id unused by estimation
                    stranger: UserId(s),
                    sim_friend: 0.0,
                    sim_stranger: 0.0,
                    count_friend: 0,
                    count_stranger: 0,
                })
                .collect(),
            coverage: 1.0,
            excluded: false,
            candidates_tested: 0,
            cap_hit: false,
        }
    }

    #[test]
    fn raw_is_exact_subtraction_and_clamp_is_nonnegative() {
        let r = record(0, 0.5, 0.25, 10);
        assert_eq!(r.copy_influence_raw, 0.25);
        let neg = record(1, 0.0, 0.4, 10);
        assert_eq!(neg.copy_influence_raw, -0.4);
        assert_eq!(neg.copy_influence_clamped, 0.0);
    }

    #[test]
    fn estimate_user_sign_convention() {
        // Strangers copy u's taste perfectly; friends never overlap.
        let mut b = ActivityLogBuilder::new(3, vec![String::from("a")]);
        // post-only log: u=0 acts on items its "stranger" (2) just acted on.
        for k in 0..10i64 {
            b.push(UserId(2), ItemId(k as u32), 10 * k, KindId(0));
            b.push(UserId(0), ItemId(k as u32), 10 * k + 1, KindId(0));
            b.push(UserId(1), ItemId(100 + k as u32), 10 * k, KindId(0));
        }
        let post = b.build();
        let (graph, _) = SocialGraph::from_edges(3, [(UserId(0), UserId(1))]);
        let a = bare_assignment(0, &[2]);
        let rec = estimate_user(
            UserId(0),
            &a,
            &graph,
            &post,
            FeedModel::full(10),
            KindPair::same(KindId(0)),
        )
        .unwrap();
        assert_eq!(rec.friends_overlap, 0.0);
        assert_eq!(rec.strangers_overlap, 1.0);
        assert_eq!(rec.copy_influence_raw, -1.0);
        assert_eq!(rec.copy_influence_clamped, 0.0);
    }

    #[test]
    fn planted_copying_recovers_high_influence() {
        // u copies its friend's feed with probability 1; the stranger acts
        // on a disjoint item range, so raw ~= 1 - strangers_overlap.
        let mut b = ActivityLogBuilder::new(3, vec![String::from("a")]);
        for k in 0..50i64 {
            b.push(UserId(1), ItemId(k as u32), 10 * k, KindId(0));
            b.push(UserId(0), ItemId(k as u32), 10 * k + 5, KindId(0));
            b.push(UserId(2), ItemId(500 + (k % 3) as u32), 10 * k, KindId(0));
        }
        let post = b.build();
        let (graph, _) = SocialGraph::from_edges(3, [(UserId(0), UserId(1))]);
        let a = bare_assignment(0, &[2]);
        let rec = estimate_user(
            UserId(0),
            &a,
            &graph,
            &post,
            FeedModel::full(10),
            KindPair::same(KindId(0)),
        )
        .unwrap();
        assert_eq!(rec.friends_overlap, 1.0);
        assert!((rec.copy_influence_raw - (1.0 - rec.strangers_overlap)).abs() < 1e-15);
    }

    #[test]
    fn excluded_and_empty_users_are_skipped() {
        let post = ActivityLogBuilder::new(2, vec![String::from("a")]).build();
        let (graph, _) = SocialGraph::from_edges(2, [(UserId(0), UserId(1))]);
        let mut a = bare_assignment(0, &[]);
        a.excluded = true;
        let err = estimate_user(
            UserId(0),
            &a,
            &graph,
            &post,
            FeedModel::full(10),
            KindPair::same(KindId(0)),
        )
        .unwrap_err();
        assert_eq!(err, SkipReason::Excluded);

        let a = bare_assignment(0, &[]);
        let err = estimate_user(
            UserId(0),
            &a,
            &graph,
            &post,
            FeedModel::full(10),
            KindPair::same(KindId(0)),
        )
        .unwrap_err();
        assert_eq!(err, SkipReason::NoPostActions);
    }

    #[test]
    fn identical_records_have_zero_bootstrap_se() {
        let records: Vec<OverlapRecord> = (0..10).map(|u| record(u, 0.4, 0.1, 5)).collect();
        let s = network_estimate(&records, 500, 3).unwrap();
        assert!(s.bootstrap_se < 1e-12, "no-variance SE {}", s.bootstrap_se);
        assert!((s.mean_copy_influence_raw - 0.3).abs() < 1e-15);
    }

    #[test]
    fn two_point_bootstrap_matches_closed_form() {
        // Oracle: with records {0, 1} a resample of size 2 has four equally
        // likely outcomes with means {0, 0.5, 0.5, 1}; the SD of that
        // distribution is sqrt(0.125) = 0.35355...
        let outcomes = [0.0f64, 0.5, 0.5, 1.0];
        let m = outcomes.iter().sum::<f64>() / 4.0;
        let var = outcomes.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 4.0;
        let closed_form = libm::sqrt(var);
        assert!((closed_form - 0.35355339059327373).abs() < 1e-12);

        let records = vec![record(0, 0.0, 0.0, 5), record(1, 1.0, 0.0, 5)];
        let s = network_estimate(&records, 40_000, 12).unwrap();
        assert!(
            (s.bootstrap_se - closed_form).abs() < 0.01,
            "bootstrap SE {} vs closed form {closed_form}",
            s.bootstrap_se
        );
    }

    #[test]
    fn bootstrap_se_shrinks_with_root_n() {
        // 4x more users drawn from the same distribution: SE halves.
        let mut rng = rng_from(5);
        let small: Vec<OverlapRecord> = (0..200)
            .map(|u| record(u, rng.random_range(0.0..1.0), 0.0, 5))
            .collect();
        let large: Vec<OverlapRecord> = (0..800)
            .map(|u| record(u, rng.random_range(0.0..1.0), 0.0, 5))
            .collect();
        let se_small = network_estimate(&small, 3000, 7).unwrap().bootstrap_se;
        let se_large = network_estimate(&large, 3000, 7).unwrap().bootstrap_se;
        let ratio = se_small / se_large;
        assert!(
            (ratio - 2.0).abs() < 0.4,
            "expected ~2x shrink, got {ratio}"
        );
    }

    #[test]
    fn network_estimate_needs_two_records() {
        let records = vec![record(0, 0.5, 0.0, 5)];
        assert_eq!(
            network_estimate(&records, 100, 0),
            Err(CoreError::TooFewRecords { got: 1 })
        );
    }

    #[test]
    fn network_mean_equals_arithmetic_mean() {
        let mut rng = rng_from(31);
        let records: Vec<OverlapRecord> = (0..333)
            .map(|u| {
                record(
                    u,
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                    rng.random_range(1..50u64),
                )
            })
            .collect();
        let s = network_estimate(&records, 0, 0).unwrap();
        let expect: f64 = records.iter().map(|r| r.copy_influence_raw).sum::<f64>()
            / records.len() as f64;
        assert!((s.mean_copy_influence_raw - expect).abs() < 1e-12);
        for r in &records {
            assert!(r.copy_influence_raw >= -1.0 && r.copy_influence_raw <= 1.0);
        }
    }

    #[test]
    fn bootstrap_is_deterministic_under_seed() {
        let mut rng = rng_from(2);
        let values: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..1.0)).collect();
        let a = bootstrap_se_of_mean(&values, 1000, 99);
        let b = bootstrap_se_of_mean(&values, 1000, 99);
        let c = bootstrap_se_of_mean(&values, 1000, 100);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn susceptibility_drops_sparse_bins() {
        // One bin with 4 users while min_users is 5: absent from output.
        let records: Vec<OverlapRecord> = (0..4).map(|u| record(u, 0.5, 0.1, 3)).collect();
        let bins = susceptibility_by_activity(&records, &[0, 10], 5, 100, 0);
        assert!(bins.is_empty());
    }

    #[test]
    fn susceptibility_single_bin_equals_network_mean() {
        let mut rng = rng_from(8);
        let records: Vec<OverlapRecord> = (0..40)
            .map(|u| record(u, rng.random_range(0.0..1.0), rng.random_range(0.0..0.5), 7))
            .collect();
        let bins = susceptibility_by_activity(&records, &[0, 100], 5, 100, 0);
        assert_eq!(bins.len(), 1);
        let s = network_estimate(&records, 0, 0).unwrap();
        assert!((bins[0].mean_influence - s.mean_copy_influence_raw).abs() < 1e-12);
        assert_eq!(bins[0].n_users, 40);
    }

    #[test]
    fn susceptibility_decreases_on_monotone_fixture() {
        // Influence inversely proportional to activity by construction.
        let mut records = Vec::new();
        let mut u = 0;
        for (n_post, infl) in [(5u64, 0.8), (15, 0.4), (25, 0.2), (35, 0.1)] {
            for _ in 0..10 {
                records.push(record(u, infl, 0.0, n_post));
                u += 1;
            }
        }
        let bins = susceptibility_by_activity(&records, &[0, 10, 20, 30, 40], 5, 100, 1);
        assert_eq!(bins.len(), 4);
        for pair in bins.windows(2) {
            assert!(pair[0].mean_influence > pair[1].mean_influence);
        }
    }

    #[test]
    fn per_user_se_zero_when_only_one_stranger_choice() {
        // Pool with exactly one matchable candidate: every repeat picks the
        // same stranger, so the SE over repeats is zero.
        let mut b = ActivityLogBuilder::new(4, vec![String::from("a")]);
        for u in 0..4u32 {
            let base = if u == 3 { 50 } else { 0 };
            for k in 0..10u32 {
                b.push(UserId(u), ItemId(base + k), k as i64, KindId(0));
            }
        }
        // post actions for overlap
        for k in 0..5i64 {
            b.push(UserId(0), ItemId(k as u32), 100 + k, KindId(0));
            b.push(UserId(1), ItemId(k as u32), 90 + k, KindId(0));
            b.push(UserId(2), ItemId(k as u32), 90 + k, KindId(0));
        }
        let log = b.build();
        let (pre, post) = log.split_at(50);
        let (graph, _) = SocialGraph::from_edges(4, [(UserId(0), UserId(1))]);
        let profiles = ProfileStore::build(&pre, KindId(0));
        let pool = vec![UserId(2), UserId(3)];
        let cfg = MatchConfig {
            rng_seed: 4,
            ..MatchConfig::default()
        };
        // User 3's profile is disjoint (sim 0 vs sim(0,1)=1): only user 2
        // can match friend 1.
        let r = per_user_se(
            UserId(0),
            6,
            &graph,
            &profiles,
            &pool,
            &cfg,
            &post,
            FeedModel::full(10),
            KindPair::same(KindId(0)),
        );
        assert_eq!(r.completed, 6);
        assert_eq!(r.se, 0.0);
    }

    #[test]
    fn per_user_se_matches_hand_computed_sd_over_two_pools() {
        // Two interchangeable strangers with different overlap against u's
        // post actions; repeats alternate between them, and the SE must
        // equal the sample SD of the observed values over sqrt(n).
        let mut b = ActivityLogBuilder::new(5, vec![String::from("a")]);
        for u in 0..5u32 {
            for k in 0..10u32 {
                b.push(UserId(u), ItemId(k), k as i64, KindId(0));
            }
        }
        // Post: u=0 copies friend 1 exactly; stranger 2 overlaps fully,
        // stranger 3 never.
        for k in 0..10i64 {
            b.push(UserId(1), ItemId(k as u32), 100 + 10 * k, KindId(0));
            b.push(UserId(0), ItemId(k as u32), 105 + 10 * k, KindId(0));
            b.push(UserId(2), ItemId(k as u32), 101 + 10 * k, KindId(0));
            b.push(UserId(3), ItemId(200 + k as u32), 101 + 10 * k, KindId(0));
        }
        let log = b.build();
        let (pre, post) = log.split_at(50);
        let (graph, _) = SocialGraph::from_edges(5, [(UserId(0), UserId(1))]);
        let profiles = ProfileStore::build(&pre, KindId(0));
        let pool = vec![UserId(2), UserId(3)];
        let cfg = MatchConfig {
            rng_seed: 10,
            ..MatchConfig::default()
        };
        let kinds = KindPair::same(KindId(0));
        let model = FeedModel::full(10);
        let n_repeats = 8u32;

        // Oracle: enumerate what each repeat produces.
        let mut values = Vec::new();
        for rep in 0..n_repeats {
            let rep_cfg = MatchConfig {
                rng_seed: derive_seed(cfg.rng_seed, "per-user-se", rep as u64),
                ..cfg
            };
            let a = match_strangers(UserId(0), &graph, &profiles, &pool, &rep_cfg);
            let rec = estimate_user(UserId(0), &a, &graph, &post, model, kinds).unwrap();
            values.push(rec.copy_influence_raw);
        }
        let expected = sample_sd(&values) / libm::sqrt(n_repeats as f64);
        let r = per_user_se(
            UserId(0),
            n_repeats,
            &graph,
            &profiles,
            &pool,
            &cfg,
            &post,
            model,
            kinds,
        );
        assert_eq!(r.completed, n_repeats);
        assert!((r.se - expected).abs() < 1e-15);
        // The fixture really has two distinct outcomes.
        let distinct: alloc::collections::BTreeSet<u64> =
            values.iter().map(|v| v.to_bits()).collect();
        assert_eq!(distinct.len(), 2, "expected both stranger pools to occur");
    }
}
