use std::cmp::Reverse;
use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::list::IdList;
use crate::error::{invalid, Result};
use crate::traces::Trace;

/// Whether the requested item itself may be left out of the cache on a
/// miss (`I1`) or must always be inserted (`I2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum EvictionModel {
    #[default]
    I1,
    I2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PolicyKind {
    Lru,
    Lfu,
    Fifo,
    Random,
    /// LRU that admits a missed item with probability `q`.
    QLru(f64),
    /// LRU with `k` layers; hits promote one layer.
    LruK(usize),
    /// Offline optimum; needs the whole trace.
    Belady,
}

impl PolicyKind {
    fn is_deterministic(&self) -> bool {
        matches!(self, Self::Lru | Self::Lfu | Self::Fifo | Self::LruK(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub policy: PolicyKind,
    pub capacity: usize,
    pub model: EvictionModel,
    pub seed: u64,
    /// Initial contents, inserted in order (the last one is the most recent).
    pub warm: Vec<usize>,
    pub record_series: bool,
}

impl SimConfig {
    pub fn new(policy: PolicyKind, capacity: usize) -> Self {
        Self {
            policy,
            capacity,
            model: EvictionModel::default(),
            seed: 0,
            warm: Vec::new(),
            record_series: false,
        }
    }

    pub fn model(mut self, model: EvictionModel) -> Self {
        self.model = model;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn warm(mut self, contents: Vec<usize>) -> Self {
        self.warm = contents;
        self
    }

    pub fn record_series(mut self, on: bool) -> Self {
        self.record_series = on;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return invalid("cache capacity must be at least 1");
        }
        match self.policy {
            PolicyKind::QLru(q) if !(q > 0.0 && q <= 1.0) => invalid(format!("q must lie in (0, 1], got {q}")),
            PolicyKind::LruK(k) if k == 0 || k > self.capacity => {
                invalid(format!("LRU-k needs 1 <= k <= capacity, got k={k}"))
            }
            _ => {
                let mut seen = std::collections::HashSet::new();
                if self.warm.len() > self.capacity || !self.warm.iter().all(|&c| c > 0 && seen.insert(c)) {
                    return invalid("warm contents must be distinct positive ids, at most capacity many");
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub hits: u64,
    pub misses: u64,
    pub hit_ratio: f64,
    /// Per-request hit indicators, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<Vec<bool>>,
}

impl SimReport {
    pub(crate) fn from_series(series: Vec<bool>, keep: bool) -> Self {
        let hits = series.iter().filter(|&&h| h).count() as u64;
        let misses = series.len() as u64 - hits;
        let total = hits + misses;
        Self {
            hits,
            misses,
            hit_ratio: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
            series: keep.then_some(series),
        }
    }
}

trait OnlinePolicy {
    fn contains(&self, id: usize) -> bool;
    /// Serves one request and returns whether it hit.
    fn access(&mut self, id: usize, rng: &mut ChaCha8Rng) -> bool;
    /// Places `id` without counting a request.
    fn preload(&mut self, id: usize);
    fn contents(&self) -> Vec<usize>;
}

struct Lru {
    list: IdList,
    cap: usize,
    admit: f64,
}

impl OnlinePolicy for Lru {
    fn contains(&self, id: usize) -> bool {
        self.list.contains(id)
    }

    fn access(&mut self, id: usize, rng: &mut ChaCha8Rng) -> bool {
        if self.list.contains(id) {
            self.list.move_to_front(id);
            return true;
        }
        if self.admit < 1.0 && rng.random::<f64>() >= self.admit {
            return false;
        }
        self.list.push_front(id);
        if self.list.len() > self.cap {
            self.list.pop_back();
        }
        false
    }

    fn preload(&mut self, id: usize) {
        self.list.push_front(id);
    }

    fn contents(&self) -> Vec<usize> {
        self.list.iter().collect()
    }
}

struct Fifo {
    list: IdList,
    cap: usize,
}

impl OnlinePolicy for Fifo {
    fn contains(&self, id: usize) -> bool {
        self.list.contains(id)
    }

    fn access(&mut self, id: usize, _: &mut ChaCha8Rng) -> bool {
        if self.list.contains(id) {
            return true;
        }
        self.list.push_front(id);
        if self.list.len() > self.cap {
            self.list.pop_back();
        }
        false
    }

    fn preload(&mut self, id: usize) {
        self.list.push_front(id);
    }

    fn contents(&self) -> Vec<usize> {
        self.list.iter().collect()
    }
}

/// Frequencies count every request since the start. Among equal counts the
/// least recently requested item goes first.
struct Lfu {
    cap: usize,
    model: EvictionModel,
    count: Vec<u64>,
    last: Vec<u64>,
    cached: Vec<bool>,
    order: BTreeSet<(u64, u64, usize)>,
    clock: u64,
}

impl Lfu {
    fn ensure(&mut self, id: usize) {
        if id >= self.count.len() {
            self.count.resize(id + 1, 0);
            self.last.resize(id + 1, 0);
            self.cached.resize(id + 1, false);
        }
    }

    fn key(&self, id: usize) -> (u64, u64, usize) {
        (self.count[id], self.last[id], id)
    }
}

impl OnlinePolicy for Lfu {
    fn contains(&self, id: usize) -> bool {
        self.cached.get(id).copied().unwrap_or(false)
    }

    fn access(&mut self, id: usize, _: &mut ChaCha8Rng) -> bool {
        self.ensure(id);
        self.clock += 1;
        let hit = self.cached[id];
        if hit {
            self.order.remove(&self.key(id));
        }
        self.count[id] += 1;
        self.last[id] = self.clock;
        let key = self.key(id);
        if hit {
            self.order.insert(key);
            return true;
        }
        if self.order.len() >= self.cap {
            let victim = *self.order.first().expect("full cache");
            if self.model == EvictionModel::I1 && key < victim {
                return false;
            }
            self.order.remove(&victim);
            self.cached[victim.2] = false;
        }
        self.order.insert(key);
        self.cached[id] = true;
        false
    }

    fn preload(&mut self, id: usize) {
        self.ensure(id);
        self.clock += 1;
        self.last[id] = self.clock;
        self.cached[id] = true;
        self.order.insert(self.key(id));
    }

    fn contents(&self) -> Vec<usize> {
        self.order.iter().map(|k| k.2).collect()
    }
}

const NIL: usize = usize::MAX;

struct RandomEvict {
    cap: usize,
    model: EvictionModel,
    items: Vec<usize>,
    pos: Vec<usize>,
}

impl RandomEvict {
    fn ensure(&mut self, id: usize) {
        if id >= self.pos.len() {
            self.pos.resize(id + 1, NIL);
        }
    }

    fn insert(&mut self, id: usize) {
        self.ensure(id);
        self.pos[id] = self.items.len();
        self.items.push(id);
    }
}

impl OnlinePolicy for RandomEvict {
    fn contains(&self, id: usize) -> bool {
        self.pos.get(id).is_some_and(|&p| p != NIL)
    }

    fn access(&mut self, id: usize, rng: &mut ChaCha8Rng) -> bool {
        if self.contains(id) {
            return true;
        }
        if self.items.len() >= self.cap {
            let pool = self.items.len() + usize::from(self.model == EvictionModel::I1);
            let k = rng.random_range(0..pool);
            if k == self.items.len() {
                return false;
            }
            let victim = self.items.swap_remove(k);
            self.pos[victim] = NIL;
            if k < self.items.len() {
                self.pos[self.items[k]] = k;
            }
        }
        self.insert(id);
        false
    }

    fn preload(&mut self, id: usize) {
        self.insert(id);
    }

    fn contents(&self) -> Vec<usize> {
        self.items.clone()
    }
}

/// Layers `0..k`, each an LRU list. Misses enter layer 0, a hit moves the
/// item to the front of the next layer, and an overflowing layer demotes
/// its tail to the front of the layer below. Evictions leave from layer 0.
struct LruK {
    layers: Vec<IdList>,
    caps: Vec<usize>,
    layer_of: Vec<usize>,
}

impl LruK {
    fn new(cap: usize, k: usize) -> Self {
        let caps = (0..k).map(|i| cap / k + usize::from(i < cap % k)).collect();
        Self {
            layers: (0..k).map(|_| IdList::new()).collect(),
            caps,
            layer_of: Vec::new(),
        }
    }

    fn set_layer(&mut self, id: usize, layer: usize) {
        if id >= self.layer_of.len() {
            self.layer_of.resize(id + 1, NIL);
        }
        self.layer_of[id] = layer;
    }
}

impl OnlinePolicy for LruK {
    fn contains(&self, id: usize) -> bool {
        self.layer_of.get(id).is_some_and(|&l| l != NIL)
    }

    fn access(&mut self, id: usize, _: &mut ChaCha8Rng) -> bool {
        if self.contains(id) {
            let l = self.layer_of[id];
            let top = self.layers.len() - 1;
            if l == top {
                self.layers[l].move_to_front(id);
            } else {
                self.layers[l].remove(id);
                self.layers[l + 1].push_front(id);
                self.set_layer(id, l + 1);
                if self.layers[l + 1].len() > self.caps[l + 1] {
                    let d = self.layers[l + 1].pop_back().expect("overfull layer");
                    self.layers[l].push_front(d);
                    self.set_layer(d, l);
                }
            }
            return true;
        }
        self.layers[0].push_front(id);
        self.set_layer(id, 0);
        if self.layers[0].len() > self.caps[0] {
            let v = self.layers[0].pop_back().expect("overfull layer");
            self.layer_of[v] = NIL;
        }
        false
    }

    fn preload(&mut self, id: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.access(id, &mut rng);
    }

    fn contents(&self) -> Vec<usize> {
        self.layers.iter().flat_map(|l| l.iter()).collect()
    }
}

/// An online cache that can be driven one request at a time.
pub struct Cache {
    policy: Box<dyn OnlinePolicy>,
    rng: ChaCha8Rng,
}

impl Cache {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let cap = cfg.capacity;
        let policy: Box<dyn OnlinePolicy> = match cfg.policy {
            PolicyKind::Lru => Box::new(Lru {
                list: IdList::new(),
                cap,
                admit: 1.0,
            }),
            PolicyKind::QLru(q) => Box::new(Lru {
                list: IdList::new(),
                cap,
                admit: q,
            }),
            PolicyKind::Fifo => Box::new(Fifo { list: IdList::new(), cap }),
            PolicyKind::Lfu => Box::new(Lfu {
                cap,
                model: cfg.model,
                count: Vec::new(),
                last: Vec::new(),
                cached: Vec::new(),
                order: BTreeSet::new(),
                clock: 0,
            }),
            PolicyKind::Random => Box::new(RandomEvict {
                cap,
                model: cfg.model,
                items: Vec::new(),
                pos: Vec::new(),
            }),
            PolicyKind::LruK(k) => Box::new(LruK::new(cap, k)),
            PolicyKind::Belady => return invalid("Belady is offline; use belady()"),
        };
        let mut cache = Self {
            policy,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        };
        for &id in &cfg.warm {
            cache.policy.preload(id);
        }
        Ok(cache)
    }

    /// Serves a request for content `id` and reports a hit.
    pub fn request(&mut self, id: usize) -> bool {
        self.policy.access(id, &mut self.rng)
    }

    pub fn contains(&self, id: usize) -> bool {
        self.policy.contains(id)
    }

    pub fn contents(&self) -> Vec<usize> {
        self.policy.contents()
    }
}

/// Runs a policy over a sequence of content ids.
pub fn simulate_ids(cfg: &SimConfig, ids: &[usize]) -> Result<SimReport> {
    if ids.contains(&0) {
        return invalid("content ids are 1-based");
    }
    if cfg.policy == PolicyKind::Belady {
        cfg.validate()?;
        return Ok(belady_core(ids, cfg.capacity, cfg.model, &cfg.warm, cfg.record_series));
    }
    let mut cache = Cache::new(cfg)?;
    let series = ids.iter().map(|&id| cache.request(id)).collect();
    Ok(SimReport::from_series(series, cfg.record_series))
}

/// Runs `policy` with capacity `m` under the default eviction model.
pub fn simulate(policy: PolicyKind, trace: &Trace, m: usize, seed: u64) -> Result<SimReport> {
    simulate_ids(&SimConfig::new(policy, m).seed(seed), &trace.contents())
}

/// Offline optimal paging: on a miss with a full cache, evict the item whose
/// next request lies furthest ahead (never-again counts as infinitely far,
/// ties to the smallest id). Under `I1` the requested item itself is a
/// candidate.
pub fn belady(trace: &Trace, m: usize, model: EvictionModel) -> Result<SimReport> {
    belady_ids(&trace.contents(), m, model)
}

pub fn belady_ids(ids: &[usize], m: usize, model: EvictionModel) -> Result<SimReport> {
    simulate_ids(&SimConfig::new(PolicyKind::Belady, m).model(model), ids)
}

fn belady_core(ids: &[usize], m: usize, model: EvictionModel, warm: &[usize], keep: bool) -> SimReport {
    const NEVER: usize = usize::MAX;
    let n = ids.iter().chain(warm).copied().max().unwrap_or(0);
    let mut next_at = vec![NEVER; ids.len()];
    let mut upcoming = vec![NEVER; n + 1];
    for t in (0..ids.len()).rev() {
        next_at[t] = upcoming[ids[t]];
        upcoming[ids[t]] = t;
    }
    // `upcoming` now holds each id's first request.
    let mut key_of = vec![None; n + 1];
    let mut set: BTreeSet<(usize, Reverse<usize>)> = BTreeSet::new();
    for &w in warm {
        let k = (upcoming[w], Reverse(w));
        set.insert(k);
        key_of[w] = Some(k);
    }
    let mut series = Vec::with_capacity(ids.len());
    for (t, &id) in ids.iter().enumerate() {
        let key = (next_at[t], Reverse(id));
        if let Some(old) = key_of[id] {
            set.remove(&old);
            set.insert(key);
            key_of[id] = Some(key);
            series.push(true);
            continue;
        }
        series.push(false);
        if set.len() >= m {
            let victim = *set.last().expect("full cache");
            if model == EvictionModel::I1 && key > victim {
                continue;
            }
            set.remove(&victim);
            key_of[victim.1 .0] = None;
        }
        set.insert(key);
        key_of[id] = Some(key);
    }
    SimReport::from_series(series, keep)
}

/// Builds a request sequence over contents `1..=n_contents` that always asks
/// for the smallest id missing from the cache, so a deterministic policy
/// with `n_contents > capacity` misses every request.
pub fn adversarial_trace(cfg: &SimConfig, n_contents: usize, length: usize) -> Result<Vec<usize>> {
    if !cfg.policy.is_deterministic() {
        return invalid("the adversarial construction needs a deterministic online policy");
    }
    if n_contents <= cfg.capacity {
        return invalid("need more contents than cache slots");
    }
    let mut cache = Cache::new(cfg)?;
    let mut out = Vec::with_capacity(length);
    for _ in 0..length {
        let id = (1..=n_contents).find(|&c| !cache.contains(c)).expect("cache smaller than catalog");
        cache.request(id);
        out.push(id);
    }
    Ok(out)
}
