//! Single-cache eviction: an online policy engine, the offline Belady
//! policy, analytic LRU models (Che, King), and TTL caches tuned by cache
//! utility maximization.

mod analytic;
mod engine;
mod list;
mod ttl;

pub use analytic::{che_characteristic_time, lru_exact_stationary, lru_hit_prob_che};
pub use engine::{
    adversarial_trace, belady, belady_ids, simulate, simulate_ids, Cache, EvictionModel, PolicyKind,
    SimConfig, SimReport,
};
pub use ttl::{
    ttl_cum_solve, ttl_hit_prob, ttl_simulate, CumConfig, CumSolution, CumWeights, StepRule, TtlConfig,
    TtlModel, TtlReport,
};
