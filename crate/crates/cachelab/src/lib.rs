//! Caching models and algorithms.
//!
//! The crate covers content popularity (power laws, MLE fitting, catalog
//! estimation), synthetic request traces, single-cache eviction policies and
//! their analytic approximations, no-regret online caching, offline placement
//! in cache networks, online bipartite caching, and replication laws for
//! grid networks.

pub mod bsca;
pub mod error;
pub mod eviction;
pub mod gridlaws;
pub mod netcache;
pub mod online;
pub mod popularity;
pub mod traces;

pub use error::{Error, Result};
