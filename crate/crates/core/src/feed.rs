//! Feed reconstruction: what a user's feed showed at any moment, defined as
//! the `M` most recent actions by a set of users strictly before a query
//! time, under two feed models.
//!
//! [`feed_before`] answers point queries directly. [`overlap`] answers the
//! estimation question — what fraction of a user's actions had their item
//! on screen at action time — with a single merged chronological sweep per
//! (user, watched-set) pair, so a full run never rescans the log per action.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;

use crate::model::{ActivityLog, ItemId, KindId, Timestamp, UserId};

/// Feed shape: attention budget plus aggregation mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeedModel {
    /// Attention budget: how many of the most recent feed actions a user is
    /// assumed to have seen.
    pub m: usize,
    pub mode: FeedMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeedMode {
    /// The raw reverse-chronological aggregation of the watched users'
    /// actions.
    FullChronological,
    /// Each watched user contributes only their single most recent action;
    /// the feed is the `M` most recent of those.
    LatestPerFriend,
}

impl FeedModel {
    pub fn full(m: usize) -> Self {
        FeedModel {
            m,
            mode: FeedMode::FullChronological,
        }
    }

    pub fn latest_per_friend(m: usize) -> Self {
        FeedModel {
            m,
            mode: FeedMode::LatestPerFriend,
        }
    }
}

/// One feed event with its total-order key (time, user, item, seq).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct FeedEvent {
    pub time: Timestamp,
    pub user: UserId,
    pub item: ItemId,
    pub seq: u32,
}

/// The visible state of a feed at one instant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeedSnapshot {
    /// Distinct visible items, sorted.
    pub items: Vec<ItemId>,
    /// Underlying events, most recent first; at most `M`.
    pub source_events: Vec<FeedEvent>,
}

/// The feed of `kind`-actions by users `w` as seen strictly before `t`.
/// Events of `exclude` (normally the feed owner) never occupy slots.
pub fn feed_before(
    t: Timestamp,
    w: &[UserId],
    log: &ActivityLog,
    model: FeedModel,
    kind: KindId,
    exclude: Option<UserId>,
) -> FeedSnapshot {
    let kind_log = log.kind(kind);
    let mut candidates: Vec<FeedEvent> = Vec::new();
    let mut seen_users = BTreeSet::new();
    for &user in w {
        if Some(user) == exclude || !seen_users.insert(user) {
            continue;
        }
        let events = kind_log.events(user);
        let cut = events.partition_point(|e| e.time < t);
        let take = match model.mode {
            FeedMode::FullChronological => model.m.min(cut),
            FeedMode::LatestPerFriend => 1.min(cut),
        };
        for e in &events[cut - take..cut] {
            candidates.push(FeedEvent {
                time: e.time,
                user,
                item: e.item,
                seq: e.seq,
            });
        }
    }
    candidates.sort_unstable_by(|a, b| b.cmp(a));
    candidates.truncate(model.m);
    let mut items: Vec<ItemId> = candidates.iter().map(|e| e.item).collect();
    items.sort_unstable();
    items.dedup();
    FeedSnapshot {
        items,
        source_events: candidates,
    }
}

/// Overlap counts for one (user, watched-set) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OverlapCounts {
    pub hits: u64,
    pub total: u64,
}

impl OverlapCounts {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }
}

struct Cursor<'a> {
    user: UserId,
    events: &'a [crate::model::Event],
    pos: usize,
}

/// Membership window for the full-chronological mode: the last `m` feed
/// events plus a refcounted item index.
struct ChronoWindow {
    m: usize,
    events: VecDeque<FeedEvent>,
    item_counts: BTreeMap<ItemId, u32>,
}

impl ChronoWindow {
    fn new(m: usize) -> Self {
        ChronoWindow {
            m,
            events: VecDeque::with_capacity(m + 1),
            item_counts: BTreeMap::new(),
        }
    }

    fn push(&mut self, e: FeedEvent) {
        self.events.push_back(e);
        *self.item_counts.entry(e.item).or_insert(0) += 1;
        if self.events.len() > self.m {
            let old = self.events.pop_front().unwrap();
            let cnt = self.item_counts.get_mut(&old.item).unwrap();
            *cnt -= 1;
            if *cnt == 0 {
                self.item_counts.remove(&old.item);
            }
        }
    }

    fn contains(&self, item: ItemId) -> bool {
        self.item_counts.contains_key(&item)
    }
}

/// Membership window for the latest-per-friend mode: each watched user's
/// current latest event, of which the `m` most recent are visible.
struct LatestWindow {
    m: usize,
    latest: BTreeMap<UserId, FeedEvent>,
    ordered: BTreeSet<FeedEvent>,
}

impl LatestWindow {
    fn new(m: usize) -> Self {
        LatestWindow {
            m,
            latest: BTreeMap::new(),
            ordered: BTreeSet::new(),
        }
    }

    fn push(&mut self, e: FeedEvent) {
        if let Some(prev) = self.latest.insert(e.user, e) {
            self.ordered.remove(&prev);
        }
        self.ordered.insert(e);
    }

    fn contains(&self, item: ItemId) -> bool {
        self.ordered.iter().rev().take(self.m).any(|e| e.item == item)
    }
}

enum Window {
    Chrono(ChronoWindow),
    Latest(LatestWindow),
}

impl Window {
    fn new(model: FeedModel) -> Self {
        match model.mode {
            FeedMode::FullChronological => Window::Chrono(ChronoWindow::new(model.m)),
            FeedMode::LatestPerFriend => Window::Latest(LatestWindow::new(model.m)),
        }
    }

    fn push(&mut self, e: FeedEvent) {
        match self {
            Window::Chrono(w) => w.push(e),
            Window::Latest(w) => w.push(e),
        }
    }

    fn contains(&self, item: ItemId) -> bool {
        match self {
            Window::Chrono(w) => w.contains(item),
            Window::Latest(w) => w.contains(item),
        }
    }
}

/// Fraction of `u`'s `target_kind` actions at or after `from` whose item
/// was visible in the feed of `exposure_kind` actions by `w` at action
/// time. The feed window sees every prior exposure event, on either side
/// of `from`; only the counted actions are restricted. `u`'s own actions
/// never occupy feed slots. Returns `None` when `u` has no counted actions
/// (the fraction is undefined).
///
/// Single chronological sweep: watched users' event streams merge through a
/// size-`M` window while `u`'s actions are consumed in order, so cost is
/// linear in the events touched rather than quadratic.
pub fn overlap(
    u: UserId,
    w: &[UserId],
    log: &ActivityLog,
    model: FeedModel,
    exposure_kind: KindId,
    target_kind: KindId,
    from: Timestamp,
) -> Option<OverlapCounts> {
    let all_queries = log.kind(target_kind).events(u);
    let queries = &all_queries[all_queries.partition_point(|e| e.time < from)..];
    if queries.is_empty() {
        return None;
    }

    let exposure_log = log.kind(exposure_kind);
    let mut cursors: Vec<Cursor> = Vec::new();
    let mut seen_users = BTreeSet::new();
    for &user in w {
        if user == u || !seen_users.insert(user) {
            continue;
        }
        let events = exposure_log.events(user);
        if !events.is_empty() {
            cursors.push(Cursor {
                user,
                events,
                pos: 0,
            });
        }
    }

    // Min-heap over (time, user, item, seq, cursor index).
    let mut heap: BTreeSet<(FeedEvent, usize)> = BTreeSet::new();
    for (ci, c) in cursors.iter().enumerate() {
        let e = c.events[0];
        heap.insert((
            FeedEvent {
                time: e.time,
                user: c.user,
                item: e.item,
                seq: e.seq,
            },
            ci,
        ));
    }

    let mut window = Window::new(model);
    let mut hits = 0u64;
    for q in queries {
        // Admit every feed event strictly earlier than the action.
        while let Some(&(ev, ci)) = heap.iter().next() {
            if ev.time >= q.time {
                break;
            }
            heap.remove(&(ev, ci));
            window.push(ev);
            let c = &mut cursors[ci];
            c.pos += 1;
            if c.pos < c.events.len() {
                let e = c.events[c.pos];
                heap.insert((
                    FeedEvent {
                        time: e.time,
                        user: c.user,
                        item: e.item,
                        seq: e.seq,
                    },
                    ci,
                ));
            }
        }
        if window.contains(q.item) {
            hits += 1;
        }
    }

    Some(OverlapCounts {
        hits,
        total: queries.len() as u64,
    })
}
