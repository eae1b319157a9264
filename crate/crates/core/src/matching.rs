//! Matching phase: assign to each friend of a user a preference- and
//! activity-matched non-friend ("similar stranger") by uniform random
//! sampling without replacement from the eligible pool.

use alloc::vec::Vec;



use crate::model::{SocialGraph, UserId};
use crate::rng::{derive_seed, rng_from, SparseSampler};
use crate::similarity::{Metric, ProfileStore};

/// Tolerances and sampling parameters for the matching phase.
#[derive(Clone, Copy, Debug)]
pub struct MatchConfig {
    /// Allowed relative difference in similarity, anchored on the friend.
    pub eps_s: f64,
    /// Allowed relative difference in pre-split action count, anchored on
    /// the friend.
    pub eps_a: f64,
    pub rng_seed: u64,
    /// Cap on candidates tested per user; `None` means the entire pool.
    pub max_candidates: Option<usize>,
    /// Minimum matched-friends fraction below which the user is excluded
    /// from estimation.
    pub coverage_required: f64,
    pub metric: Metric,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            eps_s: 0.1,
            eps_a: 0.1,
            rng_seed: 0,
            max_candidates: None,
            coverage_required: 1.0,
            metric: Metric::Jaccard,
        }
    }
}

/// One friend paired with its matched stranger, with the values the match
/// was judged on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedPair {
    pub friend: UserId,
    pub stranger: UserId,
    pub sim_friend: f64,
    pub sim_stranger: f64,
    pub count_friend: u32,
    pub count_stranger: u32,
}

/// Per-user matching result.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchAssignment {
    pub user: UserId,
    /// Matched pairs, sorted by friend id. Strangers are pairwise distinct
    /// and never the user or one of its friends.
    pub pairs: Vec<MatchedPair>,
    /// Matched friends / total friends; 1.0 for a friendless user.
    pub coverage: f64,
    /// Set when coverage fell below the configured requirement.
    pub excluded: bool,
    /// Candidates actually tested (after pool exclusions).
    pub candidates_tested: u32,
    /// The `max_candidates` cap stopped the search.
    pub cap_hit: bool,
}

impl MatchAssignment {
    pub fn strangers(&self) -> Vec<UserId> {
        self.pairs.iter().map(|p| p.stranger).collect()
    }
}

/// Both matching conditions, relative to the friend's values. A friend with
/// zero similarity (or zero count) only matches candidates with exactly
/// zero; the relative tolerance degenerates rather than admitting anyone.
pub fn pair_conditions_ok(
    eps_s: f64,
    eps_a: f64,
    sim_friend: f64,
    sim_candidate: f64,
    count_friend: u32,
    count_candidate: u32,
) -> bool {
    let sim_ok = if sim_friend == 0.0 {
        sim_candidate == 0.0
    } else {
        (sim_candidate - sim_friend).abs() <= eps_s * sim_friend
    };
    let count_ok = if count_friend == 0 {
        count_candidate == 0
    } else {
        (count_candidate as f64 - count_friend as f64).abs() <= eps_a * count_friend as f64
    };
    sim_ok && count_ok
}

/// Matches each friend of `u` with a similar stranger.
///
/// Candidates are drawn uniformly without replacement from `pool`
/// (typically the eligible users), skipping `u` and its friends. Each
/// candidate is tested against all currently unmatched friends; when it
/// satisfies the conditions for several, it goes to the friend whose
/// similarity is closest to the candidate's (ties to the smaller user id).
/// The search ends when every friend is matched, the pool runs out, or the
/// candidate cap is reached. The sampling stream is seeded from
/// `(cfg.rng_seed, u)`, so per-user results are independent of run order.
pub fn match_strangers(
    u: UserId,
    graph: &SocialGraph,
    profiles: &ProfileStore,
    pool: &[UserId],
    cfg: &MatchConfig,
) -> MatchAssignment {
    let friends = graph.neighbors(u);
    let mut unmatched: Vec<(UserId, f64, u32)> = friends
        .iter()
        .map(|&f| {
            (
                f,
                profiles.similarity(cfg.metric, u, f),
                profiles.action_count(f),
            )
        })
        .collect();
    let mut pairs: Vec<MatchedPair> = Vec::with_capacity(friends.len());
    let mut rng = rng_from(derive_seed(cfg.rng_seed, "match-user", u.0 as u64));
    let mut sampler = SparseSampler::new(pool.len() as u32);
    let mut tested: u32 = 0;
    let mut cap_hit = false;

    while !unmatched.is_empty() {
        if let Some(cap) = cfg.max_candidates {
            if tested as usize >= cap {
                cap_hit = true;
                break;
            }
        }
        let Some(idx) = sampler.draw(&mut rng) else {
            break; // pool exhausted
        };
        let candidate = pool[idx as usize];
        if candidate == u || graph.is_edge(u, candidate) {
            continue;
        }
        tested += 1;
        let sim_c = profiles.similarity(cfg.metric, u, candidate);
        let count_c = profiles.action_count(candidate);
        let mut best: Option<(usize, f64)> = None;
        for (i, &(f, sim_f, count_f)) in unmatched.iter().enumerate() {
            if !pair_conditions_ok(cfg.eps_s, cfg.eps_a, sim_f, sim_c, count_f, count_c) {
                continue;
            }
            let gap = (sim_f - sim_c).abs();
            let closer = match best {
                None => true,
                Some((bi, bgap)) => {
                    gap < bgap || (gap == bgap && f < unmatched[bi].0)
                }
            };
            if closer {
                best = Some((i, gap));
            }
        }
        if let Some((i, _)) = best {
            let (f, sim_f, count_f) = unmatched.swap_remove(i);
            pairs.push(MatchedPair {
                friend: f,
                stranger: candidate,
                sim_friend: sim_f,
                sim_stranger: sim_c,
                count_friend: count_f,
                count_stranger: count_c,
            });
        }
    }

    pairs.sort_unstable_by_key(|p| p.friend);
    let coverage = if friends.is_empty() {
        1.0
    } else {
        pairs.len() as f64 / friends.len() as f64
    };
    MatchAssignment {
        user: u,
        pairs,
        coverage,
        excluded: coverage < cfg.coverage_required,
        candidates_tested: tested,
        cap_hit,
    }
}

/// Batch driver: independent per-user assignments in ascending user order.
/// Each user draws from its own derived seed, so results match any
/// parallel or reordered execution of [`match_strangers`].
pub fn match_all(
    users: &[UserId],
    graph: &SocialGraph,
    profiles: &ProfileStore,
    pool: &[UserId],
    cfg: &MatchConfig,
) -> Vec<MatchAssignment> {
    users
        .iter()
        .map(|&u| match_strangers(u, graph, profiles, pool, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mask_to_users, ActivityLogBuilder, ItemId, KindId};
    use crate::rng::rng_from;
    use alloc::collections::BTreeSet;
    use alloc::string::String;
    use alloc::vec;
    use rand::Rng;

    #[test]
    fn tolerance_conditions_direct_check() {
        // Friend: sim 0.20, 100 actions. Candidate: sim 0.21, 105 actions.
        // 0.18 <= 0.21 <= 0.22 and 90 <= 105 <= 110.
        assert!(pair_conditions_ok(0.1, 0.1, 0.20, 0.21, 100, 105));
        assert!(!pair_conditions_ok(0.1, 0.1, 0.20, 0.23, 100, 105));
        assert!(!pair_conditions_ok(0.1, 0.1, 0.20, 0.21, 100, 111));
    }

    #[test]
    fn zero_similarity_friend_needs_zero_similarity_candidate() {
        assert!(pair_conditions_ok(0.1, 0.1, 0.0, 0.0, 50, 52));
        assert!(!pair_conditions_ok(0.1, 0.1, 0.0, 1e-6, 50, 52));
    }

    /// Fixture: `n_twins` friend/stranger profile twins plus noise users.
    /// Profile of user u is items [base(u), base(u)+width).
    fn twin_world(
        n_users: u32,
        profile: impl Fn(u32) -> (u32, u32, i64),
        edges: &[(u32, u32)],
    ) -> (SocialGraph, ProfileStore) {
        let mut b = ActivityLogBuilder::new(n_users, vec![String::from("a")]);
        for u in 0..n_users {
            let (base, width, reps) = profile(u);
            for it in base..base + width {
                for r in 0..reps {
                    b.push(UserId(u), ItemId(it), r, KindId(0));
                }
            }
        }
        let log = b.build();
        let (graph, _) =
            SocialGraph::from_edges(n_users, edges.iter().map(|&(a, b)| (UserId(a), UserId(b))));
        (graph, ProfileStore::build(&log, KindId(0)))
    }

    #[test]
    fn planted_twins_give_full_coverage() {
        // Users 1..=3 are friends of 0; users 4..=6 are exact profile twins
        // of 1..=3 (and of each other pairwise distinct bases).
        let profile = |u: u32| match u {
            0 => (0, 10, 1),
            1 | 4 => (5, 10, 1),
            2 | 5 => (8, 10, 1),
            3 | 6 => (2, 10, 1),
            _ => (100, 5, 1),
        };
        let (graph, store) = twin_world(8, profile, &[(0, 1), (0, 2), (0, 3)]);
        let pool: Vec<UserId> = (1..8).map(UserId).collect();
        let cfg = MatchConfig {
            rng_seed: 5,
            ..MatchConfig::default()
        };
        let a = match_strangers(UserId(0), &graph, &store, &pool, &cfg);
        assert_eq!(a.coverage, 1.0);
        assert!(!a.excluded);
        assert_eq!(a.pairs.len(), 3);
        let strangers: BTreeSet<UserId> = a.pairs.iter().map(|p| p.stranger).collect();
        assert_eq!(strangers.len(), 3, "strangers are pairwise distinct");
        for p in &a.pairs {
            assert!(!graph.is_edge(UserId(0), p.stranger));
            assert_ne!(p.stranger, UserId(0));
            assert!(pair_conditions_ok(
                cfg.eps_s,
                cfg.eps_a,
                p.sim_friend,
                p.sim_stranger,
                p.count_friend,
                p.count_stranger
            ));
        }
    }

    #[test]
    fn unmatchable_friend_flags_exclusion() {
        // Friend 1 has a unique profile nobody in the pool can match.
        let profile = |u: u32| match u {
            0 => (0, 10, 1),
            1 => (0, 10, 9), // same items as u but 90 actions: no twin
            _ => (50, 3, 1),
        };
        let (graph, store) = twin_world(6, profile, &[(0, 1)]);
        let pool: Vec<UserId> = (1..6).map(UserId).collect();
        let cfg = MatchConfig {
            rng_seed: 1,
            ..MatchConfig::default()
        };
        let a = match_strangers(UserId(0), &graph, &store, &pool, &cfg);
        assert_eq!(a.coverage, 0.0);
        assert!(a.excluded);
    }

    fn random_world(seed: u64, n_users: u32) -> (SocialGraph, ProfileStore, Vec<UserId>) {
        let mut rng = rng_from(seed);
        let mut b = ActivityLogBuilder::new(n_users, vec![String::from("a")]);
        for u in 0..n_users {
            // Two taste groups with overlapping pools.
            let base = if u % 2 == 0 { 0 } else { 30 };
            let n_items = rng.random_range(5..25u32);
            for _ in 0..n_items {
                b.push(
                    UserId(u),
                    ItemId(base + rng.random_range(0..40u32)),
                    rng.random_range(0..100i64),
                    KindId(0),
                );
            }
        }
        let log = b.build();
        let mut edges = Vec::new();
        for _ in 0..(n_users * 2) {
            edges.push((rng.random_range(0..n_users), rng.random_range(0..n_users)));
        }
        let (graph, _) =
            SocialGraph::from_edges(n_users, edges.iter().map(|&(a, b)| (UserId(a), UserId(b))));
        let store = ProfileStore::build(&log, KindId(0));
        let pool: Vec<UserId> = (0..n_users).map(UserId).collect();
        (graph, store, pool)
    }

    #[test]
    fn fixed_seed_reproduces_assignment_and_validator_confirms_pairs() {
        let (graph, store, pool) = random_world(42, 100);
        let cfg = MatchConfig {
            rng_seed: 9,
            eps_s: 0.3,
            eps_a: 0.5,
            ..MatchConfig::default()
        };
        let users: Vec<UserId> = (0..100).map(UserId).collect();
        let run1 = match_all(&users, &graph, &store, &pool, &cfg);
        let run2 = match_all(&users, &graph, &store, &pool, &cfg);
        assert_eq!(run1, run2, "same seed must reproduce the assignment");

        // Exhaustive pair-condition validator, independent of the matcher.
        for a in &run1 {
            let mut seen = BTreeSet::new();
            for p in &a.pairs {
                assert!(graph.neighbors(a.user).contains(&p.friend));
                assert!(!graph.is_edge(a.user, p.stranger), "stranger is a friend");
                assert_ne!(p.stranger, a.user, "stranger is the user");
                assert!(seen.insert(p.stranger), "stranger reused within a user");
                let sim_f = store.similarity(cfg.metric, a.user, p.friend);
                let sim_s = store.similarity(cfg.metric, a.user, p.stranger);
                assert_eq!(sim_f, p.sim_friend);
                assert_eq!(sim_s, p.sim_stranger);
                assert!(pair_conditions_ok(
                    cfg.eps_s,
                    cfg.eps_a,
                    sim_f,
                    sim_s,
                    store.action_count(p.friend),
                    store.action_count(p.stranger)
                ));
            }
        }
    }

    #[test]
    fn per_user_streams_are_independent_of_run_order() {
        let (graph, store, pool) = random_world(4, 60);
        let cfg = MatchConfig {
            rng_seed: 77,
            eps_s: 0.4,
            eps_a: 0.6,
            ..MatchConfig::default()
        };
        let solo = match_strangers(UserId(17), &graph, &store, &pool, &cfg);
        let users: Vec<UserId> = (0..60).map(UserId).collect();
        let batch = match_all(&users, &graph, &store, &pool, &cfg);
        assert_eq!(batch[17], solo);
    }

    #[test]
    fn empty_pool_yields_zero_coverage_without_error() {
        let (graph, store, _) = random_world(8, 20);
        let cfg = MatchConfig::default();
        let a = match_strangers(UserId(0), &graph, &store, &[], &cfg);
        if graph.degree(UserId(0)) > 0 {
            assert_eq!(a.coverage, 0.0);
        } else {
            assert_eq!(a.coverage, 1.0);
        }
        assert!(a.pairs.is_empty());
    }

    #[test]
    fn candidate_cap_stops_search_and_is_reported() {
        let (graph, store, pool) = random_world(15, 80);
        let cfg = MatchConfig {
            rng_seed: 3,
            max_candidates: Some(1),
            eps_s: 0.0,
            eps_a: 0.0,
            ..MatchConfig::default()
        };
        // Pick a user with several friends so one candidate cannot cover.
        let u = (0..80)
            .map(UserId)
            .find(|&u| graph.degree(u) >= 3)
            .unwrap();
        let a = match_strangers(u, &graph, &store, &pool, &cfg);
        assert!(a.candidates_tested <= 1);
        if a.coverage < 1.0 {
            assert!(a.cap_hit || a.candidates_tested <= 1);
        }
    }

    #[test]
    fn widening_tolerance_never_reduces_coverage() {
        let (graph, store, pool) = random_world(23, 120);
        let users: Vec<UserId> = mask_to_users(
            &(0..120)
                .map(|u| graph.degree(UserId(u)) > 0)
                .collect::<Vec<bool>>(),
        );
        let mut prev_total = 0.0f64;
        for eps in [0.05, 0.1, 0.2, 0.4] {
            let cfg = MatchConfig {
                rng_seed: 11,
                eps_s: eps,
                eps_a: eps,
                ..MatchConfig::default()
            };
            let total: f64 = match_all(&users, &graph, &store, &pool, &cfg)
                .iter()
                .map(|a| a.coverage)
                .sum();
            assert!(
                total >= prev_total - 1e-9,
                "coverage dropped when eps grew to {eps}"
            );
            prev_total = total;
        }
    }
}
