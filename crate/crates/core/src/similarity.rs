//! Preference similarity over pre-split activity sets, the homophily proxy.
//!
//! Similarity operates on distinct item sets; event multiplicity is tracked
//! separately as `action_count` for the activity-volume matching condition.

use alloc::vec::Vec;

use crate::model::{ActivityLog, ItemId, KindId, UserId};

/// Which set-similarity metric drives matching and neighbor selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Jaccard,
    Cosine,
}

/// A user's preference evidence at the split time: distinct items acted on
/// before `T` (for one action kind) plus the raw event count.
#[derive(Clone, Copy, Debug)]
pub struct PreferenceProfile<'a> {
    pub user: UserId,
    pub items: &'a [ItemId],
    pub action_count: u32,
}

/// Owned per-user profiles for one kind, built from a pre-split log.
#[derive(Clone, Debug)]
pub struct ProfileStore {
    items: Vec<Vec<ItemId>>,
    counts: Vec<u32>,
}

impl ProfileStore {
    /// Builds profiles for every user from the pre-`T` log slice.
    pub fn build(pre: &ActivityLog, kind: KindId) -> ProfileStore {
        let kind_log = pre.kind(kind);
        let n = pre.n_users();
        let mut items = Vec::with_capacity(n as usize);
        let mut counts = Vec::with_capacity(n as usize);
        for u in 0..n {
            let user = UserId(u);
            items.push(kind_log.distinct_items(user).to_vec());
            counts.push(kind_log.events(user).len() as u32);
        }
        ProfileStore { items, counts }
    }

    pub fn profile(&self, u: UserId) -> PreferenceProfile<'_> {
        PreferenceProfile {
            user: u,
            items: &self.items[u.0 as usize],
            action_count: self.counts[u.0 as usize],
        }
    }

    pub fn action_count(&self, u: UserId) -> u32 {
        self.counts[u.0 as usize]
    }

    pub fn similarity(&self, metric: Metric, a: UserId, b: UserId) -> f64 {
        let ia = &self.items[a.0 as usize];
        let ib = &self.items[b.0 as usize];
        match metric {
            Metric::Jaccard => jaccard(ia, ib),
            Metric::Cosine => cosine(ia, ib),
        }
    }

    pub fn n_users(&self) -> u32 {
        self.items.len() as u32
    }
}

fn intersection_size(a: &[ItemId], b: &[ItemId]) -> usize {
    let mut i = 0;
    let mut j = 0;
    let mut shared = 0;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                shared += 1;
                i += 1;
                j += 1;
            }
        }
    }
    shared
}

/// Jaccard similarity of two sorted distinct-item slices:
/// `|a ∩ b| / |a ∪ b|`. Two empty sets score 0: an empty profile carries no
/// preference evidence.
pub fn jaccard(a: &[ItemId], b: &[ItemId]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let shared = intersection_size(a, b);
    let union = a.len() + b.len() - shared;
    shared as f64 / union as f64
}

/// Cosine similarity over binary item-membership vectors:
/// `|a ∩ b| / sqrt(|a|·|b|)`. Zero when either set is empty.
pub fn cosine(a: &[ItemId], b: &[ItemId]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let shared = intersection_size(a, b);
    shared as f64 / libm::sqrt(a.len() as f64 * b.len() as f64)
}

/// The `k` pool members most similar to `u`, descending similarity, ties
/// broken by ascending user id. Returns fewer than `k` only when the pool
/// is smaller. The pool must not contain `u`.
pub fn top_k_similar(
    u: UserId,
    pool: &[UserId],
    k: usize,
    metric: Metric,
    store: &ProfileStore,
) -> Vec<UserId> {
    let mut scored: Vec<(f64, UserId)> = pool
        .iter()
        .map(|&v| (store.similarity(metric, u, v), v))
        .collect();
    scored.sort_unstable_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    scored.truncate(k);
    scored.into_iter().map(|(_, v)| v).collect()
}

/// Jaccard top-`k` neighbors for every flagged user over the whole
/// population, via an inverted item index. Produces exactly what
/// [`top_k_similar`] returns with a pool of all other users; scanning only
/// users that share at least one item keeps it near-linear in the index
/// size.
pub fn top_k_similar_all(
    store: &ProfileStore,
    active: &[bool],
    k: usize,
) -> Vec<Vec<UserId>> {
    let n = store.n_users() as usize;
    let mut n_items = 0u32;
    for items in &store.items {
        if let Some(&ItemId(max)) = items.last() {
            n_items = n_items.max(max + 1);
        }
    }
    let mut postings: Vec<Vec<u32>> = alloc::vec![Vec::new(); n_items as usize];
    for (u, items) in store.items.iter().enumerate() {
        for item in items {
            postings[item.0 as usize].push(u as u32);
        }
    }

    let mut result: Vec<Vec<UserId>> = alloc::vec![Vec::new(); n];
    let mut shared = alloc::vec![0u32; n];
    let mut touched: Vec<u32> = Vec::new();
    for u in 0..n {
        if !active[u] {
            continue;
        }
        let items_u = &store.items[u];
        for item in items_u {
            for &v in &postings[item.0 as usize] {
                if v as usize != u {
                    if shared[v as usize] == 0 {
                        touched.push(v);
                    }
                    shared[v as usize] += 1;
                }
            }
        }
        let mut scored: Vec<(f64, UserId)> = touched
            .iter()
            .map(|&v| {
                let inter = shared[v as usize] as usize;
                let union = items_u.len() + store.items[v as usize].len() - inter;
                (inter as f64 / union as f64, UserId(v))
            })
            .collect();
        scored.sort_unstable_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(core::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        });
        let mut top: Vec<UserId> = scored.iter().take(k).map(|&(_, v)| v).collect();
        if top.len() < k {
            // Zero-similarity users fill remaining slots in id order,
            // matching the exhaustive sort's tie-break.
            let in_top: alloc::collections::BTreeSet<u32> =
                scored.iter().map(|&(_, v)| v.0).collect();
            for v in 0..n as u32 {
                if top.len() >= k {
                    break;
                }
                if v as usize != u && !in_top.contains(&v) {
                    top.push(UserId(v));
                }
            }
        }
        result[u] = top;
        for &v in &touched {
            shared[v as usize] = 0;
        }
        touched.clear();
    }
    result
}
