//! Copy-influence estimation for activity feeds.
//!
//! Social networks surface friends' actions through reverse-chronological
//! activity feeds, and users sometimes copy what they see there. Raw overlap
//! between a user's actions and her friends' feed overstates that copying,
//! because friends are similar people to begin with (homophily) and because
//! everyone is exposed to the same outside world. This crate implements a
//! two-phase matched estimator that separates the two:
//!
//! 1. **Matching** — on activity before a split time `T`, pair every friend
//!    of a user with a non-friend ("similar stranger") whose preference
//!    similarity to the user and activity volume are within configurable
//!    tolerances of the friend's.
//! 2. **Estimation** — on activity after `T`, compute the fraction of the
//!    user's actions whose item appeared among the last `M` feed actions of
//!    the friend set (friends-overlap) and of the matched stranger set
//!    (strangers-overlap). Their difference is the per-user copy-influence
//!    estimate; the network estimate is the mean with a bootstrap standard
//!    error.
//!
//! The crate also ships the semi-synthetic generators used to validate the
//! estimator: behavioral processes (feed copying, personal preference via
//! nearest neighbors, popularity-driven external exposure, and mixtures)
//! that replace the items of a real post-`T` action skeleton while keeping
//! the social graph and timestamps intact.
//!
//! The crate is `no_std` (with `alloc`); all I/O, file formats, parallel
//! drivers, and the CLI live in the companion `feedinf` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod estimation;
pub mod feed;
pub mod matching;
pub mod model;
pub mod rng;
pub mod similarity;
pub mod synth;

pub use error::CoreError;
pub use model::{ActivityLog, ActivityLogBuilder, ItemId, KindId, SocialGraph, Timestamp, UserId};
