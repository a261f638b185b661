//! Offline placement in caching networks: greedy femtocaching on a bipartite
//! user/cache graph, local search and greedy for two-layer trees, and
//! exhaustive oracles for small instances.
//!
//! File ids are 0-based here; the JSON network format uses 1-based ids.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Largest number of placements the exhaustive oracle will enumerate.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

/// Expected request rates `lambda[u][n]` per user (or leaf) and file.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandMatrix {
    rates: Vec<Vec<f64>>,
    n_files: usize,
}

impl DemandMatrix {
    pub fn new(rates: Vec<Vec<f64>>) -> Result<Self> {
        let n_files = rates.first().map_or(0, Vec::len);
        for (u, row) in rates.iter().enumerate() {
            if row.len() != n_files {
                return invalid(format!("demand row {u} has {} files, expected {n_files}", row.len()));
            }
            if let Some(x) = row.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return invalid(format!("demand of user {u} must be finite and nonnegative, got {x}"));
            }
        }
        Ok(Self { rates, n_files })
    }

    /// Every one of `n_users` rows equal to `rates`.
    pub fn homogeneous(n_users: usize, rates: &[f64]) -> Result<Self> {
        Self::new(vec![rates.to_vec(); n_users])
    }

    pub fn n_users(&self) -> usize {
        self.rates.len()
    }

    pub fn n_files(&self) -> usize {
        self.n_files
    }

    pub fn rate(&self, u: usize, n: usize) -> f64 {
        self.rates[u][n]
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.rates[u]
    }

    fn is_homogeneous(&self) -> bool {
        self.rates.windows(2).all(|w| w[0] == w[1])
    }
}

/// Cached file sets, one per cache.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub sets: Vec<BTreeSet<usize>>,
}

impl Placement {
    pub fn empty(n_caches: usize) -> Self {
        Self {
            sets: vec![BTreeSet::new(); n_caches],
        }
    }

    pub fn contains(&self, cache: usize, file: usize) -> bool {
        self.sets[cache].contains(&file)
    }

    fn check(&self, capacities: &[usize], sizes: Option<&[u32]>, n_files: usize) -> Result<()> {
        if self.sets.len() != capacities.len() {
            return invalid(format!(
                "placement covers {} caches, network has {}",
                self.sets.len(),
                capacities.len()
            ));
        }
        for (v, set) in self.sets.iter().enumerate() {
            if let Some(&n) = set.iter().find(|&&n| n >= n_files) {
                return invalid(format!("cache {v} holds unknown file {n}"));
            }
            let used: u64 = match sizes {
                Some(s) => set.iter().map(|&n| s[n] as u64).sum(),
                None => set.len() as u64,
            };
            if used > capacities[v] as u64 {
                return invalid(format!("cache {v} stores {used} units, capacity {}", capacities[v]));
            }
        }
        Ok(())
    }
}

/// Users connected to small cells; a macro cell reaches every user with
/// delay `mbs_delay[u]` and stores the whole catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteNet {
    mbs_delay: Vec<f64>,
    capacities: Vec<usize>,
    links: Vec<Vec<(usize, f64)>>,
}

impl BipartiteNet {
    /// `edges` holds `(user, cache, delay)` triples; every delay must lie in
    /// `[0, mbs_delay[user]]`.
    pub fn new(mbs_delay: Vec<f64>, capacities: Vec<usize>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if let Some(d) = mbs_delay.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return invalid(format!("macro cell delay must be finite and nonnegative, got {d}"));
        }
        let mut links = vec![Vec::new(); capacities.len()];
        let mut seen = BTreeSet::new();
        for &(u, v, d) in edges {
            if u >= mbs_delay.len() || v >= capacities.len() {
                return invalid(format!("edge ({u}, {v}) references an unknown node"));
            }
            if !(d.is_finite() && d >= 0.0 && d <= mbs_delay[u]) {
                return invalid(format!(
                    "delay {d} on edge ({u}, {v}) must lie in [0, {}]",
                    mbs_delay[u]
                ));
            }
            if !seen.insert((u, v)) {
                return invalid(format!("duplicate edge ({u}, {v})"));
            }
            links[v].push((u, d));
        }
        Ok(Self {
            mbs_delay,
            capacities,
            links,
        })
    }

    pub fn n_users(&self) -> usize {
        self.mbs_delay.len()
    }

    pub fn n_caches(&self) -> usize {
        self.capacities.len()
    }

    pub fn capacities(&self) -> &[usize] {
        &self.capacities
    }

    pub fn mbs_delay(&self) -> &[f64] {
        &self.mbs_delay
    }

    /// `(user, delay)` pairs reached by cache `v`.
    pub fn links(&self, v: usize) -> &[(usize, f64)] {
        &self.links[v]
    }

    fn check_demand(&self, demand: &DemandMatrix) -> Result<()> {
        if demand.n_users() != self.n_users() {
            return invalid(format!(
                "demand has {} users, network has {}",
                demand.n_users(),
                self.n_users()
            ));
        }
        Ok(())
    }

    fn best_delays(&self, pl: &Placement, n_files: usize) -> Vec<Vec<f64>> {
        let mut best: Vec<Vec<f64>> = self.mbs_delay.iter().map(|&d| vec![d; n_files]).collect();
        for (v, set) in pl.sets.iter().enumerate() {
            for &n in set {
                for &(u, d) in &self.links[v] {
                    if d < best[u][n] {
                        best[u][n] = d;
                    }
                }
            }
        }
        best
    }
}

/// Total delay saved relative to fetching everything from the macro cell:
/// each user is served by the lowest-delay reachable cache holding the file.
pub fn femto_objective(net: &BipartiteNet, demand: &DemandMatrix, pl: &Placement) -> Result<f64> {
    net.check_demand(demand)?;
    pl.check(&net.capacities, None, demand.n_files())?;
    let best = net.best_delays(pl, demand.n_files());
    let mut total = 0.0;
    for (u, row) in best.iter().enumerate() {
        let d0 = net.mbs_delay[u];
        for (n, &d) in row.iter().enumerate() {
            total += demand.rate(u, n) * (d0 - d);
        }
    }
    Ok(total)
}

/// Greedy over (cache, file) elements by marginal delay saving. Ties go to
/// the lexicographically smallest (cache, file); stops once no element has
/// positive gain or every cache is full.
pub fn femto_greedy(net: &BipartiteNet, demand: &DemandMatrix) -> Result<Placement> {
    net.check_demand(demand)?;
    let n_files = demand.n_files();
    let mut pl = Placement::empty(net.n_caches());
    let mut best = net.best_delays(&pl, n_files);
    let mut free = net.capacities.clone();
    loop {
        let mut top: Option<(f64, usize, usize)> = None;
        for v in (0..net.n_caches()).filter(|&v| free[v] > 0) {
            for n in (0..n_files).filter(|n| !pl.sets[v].contains(n)) {
                let gain: f64 = net.links[v]
                    .iter()
                    .map(|&(u, d)| demand.rate(u, n) * (best[u][n] - d).max(0.0))
                    .sum();
                if top.is_none_or(|(g, _, _)| gain > g) {
                    top = Some((gain, v, n));
                }
            }
        }
        match top {
            Some((gain, v, n)) if gain > 0.0 => {
                pl.sets[v].insert(n);
                free[v] -= 1;
                for &(u, d) in &net.links[v] {
                    best[u][n] = best[u][n].min(d);
                }
            }
            _ => return Ok(pl),
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] < n - k + i) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Exact maximum of `objective` over every placement that fills each cache
/// with `min(B_v, n_files)` files. Only complete placements are visited, so
/// the objective should be monotone. Ties keep the first placement in
/// enumeration order.
pub fn exhaustive_placement_opt(
    capacities: &[usize],
    n_files: usize,
    mut objective: impl FnMut(&Placement) -> Result<f64>,
) -> Result<(Placement, f64)> {
    let mut count: u128 = 1;
    for &b in capacities {
        count = count.saturating_mul(binomial(n_files, b.min(n_files)));
        if count > EXHAUSTIVE_LIMIT {
            return invalid(format!("more than {EXHAUSTIVE_LIMIT} placements to enumerate"));
        }
    }
    let choices: Vec<Vec<Vec<usize>>> = capacities
        .iter()
        .map(|&b| combinations(n_files, b.min(n_files)))
        .collect();
    let mut idx = vec![0usize; capacities.len()];
    let mut best: Option<(Placement, f64)> = None;
    loop {
        let pl = Placement {
            sets: idx
                .iter()
                .zip(&choices)
                .map(|(&i, c)| c[i].iter().copied().collect())
                .collect(),
        };
        let value = objective(&pl)?;
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((pl, value));
        }
        let Some(v) = (0..idx.len()).rev().find(|&v| idx[v] + 1 < choices[v].len()) else {
            break;
        };
        idx[v] += 1;
        idx[v + 1..].iter_mut().for_each(|i| *i = 0);
    }
    Ok(best.expect("at least one placement"))
}

/// Two-layer tree: leaves `1..=V` below a parent (node 0) below a root that
/// stores everything. Fetching from the root to the parent costs `d0` per
/// unit, parent to leaf `u` costs `d_leaf[u]`, and leaf `v` serving leaf `u`
/// costs `d_peer[v][u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNet {
    parent_capacity: usize,
    leaf_capacities: Vec<usize>,
    d0: f64,
    d_leaf: Vec<f64>,
    d_peer: Vec<Vec<f64>>,
    sizes: Vec<u32>,
}

impl TreeNet {
    pub fn new(
        parent_capacity: usize,
        leaf_capacities: Vec<usize>,
        d0: f64,
        d_leaf: Vec<f64>,
        d_peer: Vec<Vec<f64>>,
        sizes: Vec<u32>,
    ) -> Result<Self> {
        let v = leaf_capacities.len();
        if v == 0 {
            return invalid("tree needs at least one leaf");
        }
        if d_leaf.len() != v || d_peer.len() != v || d_peer.iter().any(|r| r.len() != v) {
            return invalid("cost vectors must match the number of leaves");
        }
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(d0) || !d_leaf.iter().all(|&x| ok(x)) {
            return invalid("costs must be finite and nonnegative");
        }
        for a in 0..v {
            for b in (0..v).filter(|&b| b != a) {
                let c = d_peer[a][b];
                if !ok(c) || c > d0 + d_leaf[b] {
                    return invalid(format!(
                        "peer cost {c} from leaf {} to leaf {} must lie in [0, d0 + d]",
                        a + 1,
                        b + 1
                    ));
                }
            }
        }
        if sizes.contains(&0) {
            return invalid("file sizes must be positive");
        }
        Ok(Self {
            parent_capacity,
            leaf_capacities,
            d0,
            d_leaf,
            d_peer,
            sizes,
        })
    }

    /// Identical leaves with capacity `b`, leaf cost `d`, peer cost `d_prime`
    /// and unit file sizes.
    pub fn symmetric(leaves: usize, b: usize, b0: usize, d0: f64, d: f64, d_prime: f64, n_files: usize) -> Result<Self> {
        Self::new(
            b0,
            vec![b; leaves],
            d0,
            vec![d; leaves],
            vec![vec![d_prime; leaves]; leaves],
            vec![1; n_files],
        )
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_capacities.len()
    }

    pub fn n_files(&self) -> usize {
        self.sizes.len()
    }

    /// Capacities indexed by node: parent first, then the leaves.
    pub fn capacities(&self) -> Vec<usize> {
        std::iter::once(self.parent_capacity)
            .chain(self.leaf_capacities.iter().copied())
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        let v = self.n_leaves();
        let dp = if v > 1 { self.d_peer[0][1] } else { 0.0 };
        self.leaf_capacities.iter().all(|&b| b == self.leaf_capacities[0])
            && self.d_leaf.iter().all(|&d| d == self.d_leaf[0])
            && (0..v).all(|a| (0..v).all(|b| a == b || self.d_peer[a][b] == dp))
    }

    fn unit_sizes(&self) -> bool {
        self.sizes.iter().all(|&s| s == 1)
    }

    fn check(&self, demand: &DemandMatrix) -> Result<()> {
        if demand.n_users() != self.n_leaves() || demand.n_files() != self.n_files() {
            return invalid(format!(
                "demand is {}x{}, tree has {} leaves and {} files",
                demand.n_users(),
                demand.n_files(),
                self.n_leaves(),
                self.n_files()
            ));
        }
        Ok(())
    }

    /// Routing savings contributed by file `n` given which leaves and
    /// whether the parent hold it. Each leaf picks its cheapest source.
    fn file_value(&self, demand: &DemandMatrix, n: usize, at_leaf: &[bool], at_parent: bool) -> f64 {
        let mut total = 0.0;
        for u in 0..self.n_leaves() {
            let lam = demand.rate(u, n);
            if lam == 0.0 {
                continue;
            }
            let full = self.d0 + self.d_leaf[u];
            let saving = if at_leaf[u] {
                full
            } else {
                let peer = (0..self.n_leaves())
                    .filter(|&v| at_leaf[v])
                    .map(|v| full - self.d_peer[v][u])
                    .fold(0.0, f64::max);
                if at_parent {
                    peer.max(self.d0)
                } else {
                    peer
                }
            };
            total += lam * saving;
        }
        self.sizes[n] as f64 * total
    }

    fn holders(pl: &Placement, n: usize) -> (Vec<bool>, bool) {
        (pl.sets[1..].iter().map(|s| s.contains(&n)).collect(), pl.sets[0].contains(&n))
    }
}

/// Routing cost saved against serving every request from the root, with
/// optimal routing for the given placement (node 0 is the parent).
pub fn routing_savings(net: &TreeNet, demand: &DemandMatrix, pl: &Placement) -> Result<f64> {
    net.check(demand)?;
    pl.check(&net.capacities(), Some(&net.sizes), net.n_files())?;
    Ok((0..net.n_files())
        .map(|n| {
            let (leaf, parent) = TreeNet::holders(pl, n);
            net.file_value(demand, n, &leaf, parent)
        })
        .sum())
}

/// How a local-search node decides whether to swap a file in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwapRule {
    /// Compare the utility of the candidate with the least useful cached
    /// item, each valued by its own contribution at this node.
    #[default]
    Local,
    /// Evaluate the network-wide savings before and after the swap.
    Generalized,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalSearchResult {
    pub placement: Placement,
    pub value: f64,
    pub proposals: usize,
    pub swaps: usize,
    pub converged: bool,
}

/// Randomized local search over (node, non-cached file) proposals, starting
/// from empty caches. Each pass visits every proposal once in random order;
/// the search stops after a pass without an accepted change or after
/// `max_iters` proposals (default `50 * N * V`).
pub fn hierarchical_local_search(
    net: &TreeNet,
    demand: &DemandMatrix,
    max_iters: Option<usize>,
    seed: u64,
    rule: SwapRule,
) -> Result<LocalSearchResult> {
    net.check(demand)?;
    let n_files = net.n_files();
    let caps = net.capacities();
    let nodes: Vec<usize> = (0..caps.len()).filter(|&v| caps[v] > 0).collect();
    let max_iters = max_iters.unwrap_or(50 * n_files * net.n_leaves().max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pl = Placement::empty(caps.len());
    let mut used = vec![0u64; caps.len()];
    let mut leaf = vec![vec![false; net.n_leaves()]; n_files];
    let mut parent = vec![false; n_files];
    let mut values: Vec<f64> = (0..n_files)
        .map(|n| net.file_value(demand, n, &leaf[n], parent[n]))
        .collect();

    let toggle = |leaf: &mut Vec<Vec<bool>>, parent: &mut Vec<bool>, node: usize, n: usize, on: bool| {
        if node == 0 {
            parent[n] = on;
        } else {
            leaf[n][node - 1] = on;
        }
    };

    let mut proposals: Vec<(usize, usize)> =
        nodes.iter().flat_map(|&v| (0..n_files).map(move |n| (v, n))).collect();
    let (mut iters, mut swaps) = (0usize, 0usize);
    loop {
        proposals.shuffle(&mut rng);
        let mut changed = false;
        for &(node, n) in &proposals {
            if pl.sets[node].contains(&n) {
                continue;
            }
            if iters == max_iters {
                return Ok(LocalSearchResult {
                    value: values.iter().sum(),
                    placement: pl,
                    proposals: iters,
                    swaps,
                    converged: false,
                });
            }
            iters += 1;
            let size = net.sizes[n] as u64;
            if size > caps[node] as u64 {
                continue;
            }
            toggle(&mut leaf, &mut parent, node, n, true);
            let gain = net.file_value(demand, n, &leaf[n], parent[n]) - values[n];
            toggle(&mut leaf, &mut parent, node, n, false);
            if gain <= 0.0 {
                continue;
            }
            // Cached items at this node by increasing removal loss.
            let mut cached: Vec<(f64, usize)> = pl.sets[node]
                .iter()
                .map(|&m| {
                    toggle(&mut leaf, &mut parent, node, m, false);
                    let loss = values[m] - net.file_value(demand, m, &leaf[m], parent[m]);
                    toggle(&mut leaf, &mut parent, node, m, true);
                    (loss, m)
                })
                .collect();
            cached.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut evict = Vec::new();
            let mut free = caps[node] as u64 - used[node];
            let mut loss = 0.0;
            for &(l, m) in &cached {
                if free >= size {
                    break;
                }
                free += net.sizes[m] as u64;
                loss += l;
                evict.push(m);
            }
            let accept = match rule {
                SwapRule::Local => gain > loss * (1.0 + 1e-12) + 1e-300,
                SwapRule::Generalized => {
                    let before: f64 = values[n] + evict.iter().map(|&m| values[m]).sum::<f64>();
                    for &m in &evict {
                        toggle(&mut leaf, &mut parent, node, m, false);
                    }
                    toggle(&mut leaf, &mut parent, node, n, true);
                    let after: f64 = net.file_value(demand, n, &leaf[n], parent[n])
                        + evict
                            .iter()
                            .map(|&m| net.file_value(demand, m, &leaf[m], parent[m]))
                            .sum::<f64>();
                    toggle(&mut leaf, &mut parent, node, n, false);
                    for &m in &evict {
                        toggle(&mut leaf, &mut parent, node, m, true);
                    }
                    after > before * (1.0 + 1e-12) + 1e-300
                }
            };
            if !accept {
                continue;
            }
            for &m in &evict {
                pl.sets[node].remove(&m);
                used[node] -= net.sizes[m] as u64;
                toggle(&mut leaf, &mut parent, node, m, false);
                values[m] = net.file_value(demand, m, &leaf[m], parent[m]);
            }
            pl.sets[node].insert(n);
            used[node] += size;
            toggle(&mut leaf, &mut parent, node, n, true);
            values[n] = net.file_value(demand, n, &leaf[n], parent[n]);
            swaps += 1;
            changed = true;
        }
        if !changed {
            return Ok(LocalSearchResult {
                value: values.iter().sum(),
                placement: pl,
                proposals: iters,
                swaps,
                converged: true,
            });
        }
    }
}

/// Upper bound from the knapsack reformulation of the symmetric problem:
/// enumerate parent contents, then fill the pooled leaf storage `V * B`
/// fractionally with first copies (worth `d'' = V(d0+d) - (V-1)d'` per
/// unit demand) and full replications (worth `(V-1)d'`).
pub fn symmetric_knapsack_bound(net: &TreeNet, demand: &DemandMatrix) -> Result<f64> {
    net.check(demand)?;
    if !net.is_symmetric() || !demand.is_homogeneous() {
        return invalid("knapsack bound needs symmetric costs, capacities and demand");
    }
    let n_files = net.n_files();
    if n_files > 20 {
        return invalid("knapsack bound enumerates parent contents; N <= 20 supported");
    }
    let v = net.n_leaves() as f64;
    let (d0, d) = (net.d0, net.d_leaf[0]);
    let dp = if net.n_leaves() > 1 { net.d_peer[0][1] } else { 0.0 };
    let dpp = v * (d0 + d) - (v - 1.0) * dp;
    let lam = demand.row(0);
    let pool = v * net.leaf_capacities[0] as f64;
    let mut best = 0.0f64;
    for mask in 0u32..(1 << n_files) {
        let parent_size: u64 = (0..n_files)
            .filter(|n| mask >> n & 1 == 1)
            .map(|n| net.sizes[n] as u64)
            .sum();
        if parent_size > net.parent_capacity as u64 {
            continue;
        }
        let mut value = 0.0;
        // (density, size, value)
        let mut items = Vec::new();
        for n in 0..n_files {
            let s = net.sizes[n] as f64;
            if mask >> n & 1 == 1 {
                value += s * lam[n] * v * d0;
            } else {
                items.push((lam[n] * dpp, s, s * lam[n] * dpp));
                if v > 1.0 {
                    items.push((lam[n] * dp, (v - 1.0) * s, s * lam[n] * (v - 1.0) * dp));
                }
            }
        }
        items.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut room = pool;
        for (_, size, val) in items {
            if room <= 0.0 {
                break;
            }
            let take = (room / size).min(1.0);
            value += take * val;
            room -= take * size;
        }
        best = best.max(value);
    }
    Ok(best)
}

/// Requests served inside the tree (by the parent or the requesting leaf).
/// Node 0 is the parent; file sizes are ignored.
pub fn served_requests(net: &TreeNet, demand: &DemandMatrix, pl: &Placement) -> Result<f64> {
    net.check(demand)?;
    pl.check(&net.capacities(), None, net.n_files())?;
    let mut total = 0.0;
    for u in 0..net.n_leaves() {
        for n in 0..net.n_files() {
            if pl.sets[0].contains(&n) || pl.sets[u + 1].contains(&n) {
                total += demand.rate(u, n);
            }
        }
    }
    Ok(total)
}

/// Greedy parent placement by marginal served requests (ties to the smaller
/// file id), after which every leaf caches its most requested files among
/// those the parent does not hold. Requires unit file sizes.
pub fn hierarchical_greedy(net: &TreeNet, demand: &DemandMatrix) -> Result<Placement> {
    net.check(demand)?;
    if !net.unit_sizes() {
        return invalid("hierarchical greedy assumes unit file sizes");
    }
    let n_files = net.n_files();
    let v = net.n_leaves();
    // Files by decreasing demand per leaf, ties to the smaller id.
    let order: Vec<Vec<usize>> = (0..v)
        .map(|u| {
            let mut o: Vec<usize> = (0..n_files).collect();
            o.sort_by(|&a, &b| demand.rate(u, b).total_cmp(&demand.rate(u, a)).then(a.cmp(&b)));
            o
        })
        .collect();
    let mut in_y = vec![false; n_files];
    for _ in 0..net.parent_capacity.min(n_files) {
        let mut gain = vec![0.0; n_files];
        for u in 0..v {
            let b = net.leaf_capacities[u];
            let mut at_leaf = vec![false; n_files];
            let mut next = 0.0;
            let mut taken = 0;
            for &n in order[u].iter().filter(|&&n| !in_y[n]) {
                if taken < b {
                    at_leaf[n] = true;
                    taken += 1;
                } else {
                    next = demand.rate(u, n);
                    break;
                }
            }
            for n in (0..n_files).filter(|&n| !in_y[n]) {
                gain[n] += if at_leaf[n] { next } else { demand.rate(u, n) };
            }
        }
        let pick = (0..n_files)
            .filter(|&n| !in_y[n])
            .fold(None, |acc: Option<usize>, n| match acc {
                Some(a) if gain[a] >= gain[n] => Some(a),
                _ => Some(n),
            })
            .expect("parent capacity bounded by catalog size");
        in_y[pick] = true;
    }
    let mut pl = Placement::empty(v + 1);
    pl.sets[0] = (0..n_files).filter(|&n| in_y[n]).collect();
    for u in 0..v {
        pl.sets[u + 1] = order[u]
            .iter()
            .copied()
            .filter(|&n| !in_y[n])
            .take(net.leaf_capacities[u])
            .collect();
    }
    Ok(pl)
}

/// Network description as read from JSON. Cache id 0 is the macro cell;
/// its edges give each user's fallback delay. File ids are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub users: Vec<u64>,
    pub caches: Vec<CacheSpec>,
    pub edges: Vec<(u64, u64, f64)>,
    pub demand: Vec<(u64, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheSpec {
    pub id: u64,
    pub capacity: usize,
}

/// A parsed network with the external ids of its small cells, in the order
/// used by [`Placement::sets`].
#[derive(Debug, Clone)]
pub struct FemtoInstance {
    pub net: BipartiteNet,
    pub demand: DemandMatrix,
    pub cache_ids: Vec<u64>,
}

impl NetworkSpec {
    pub fn build(&self) -> Result<FemtoInstance> {
        let user_idx: BTreeMap<u64, usize> = self.users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        if user_idx.len() != self.users.len() {
            return invalid("duplicate user id");
        }
        if !self.caches.iter().any(|c| c.id == 0) {
            return invalid("cache 0 (macro cell) is missing");
        }
        let sbs: Vec<&CacheSpec> = self.caches.iter().filter(|c| c.id != 0).collect();
        let cache_idx: BTreeMap<u64, usize> = sbs.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
        if cache_idx.len() != sbs.len() {
            return invalid("duplicate cache id");
        }
        let mut mbs = vec![None; self.users.len()];
        let mut edges = Vec::new();
        for &(u, v, d) in &self.edges {
            let Some(&ui) = user_idx.get(&u) else {
                return invalid(format!("edge references unknown user {u}"));
            };
            if v == 0 {
                if mbs[ui].replace(d).is_some() {
                    return invalid(format!("user {u} has two macro cell edges"));
                }
            } else {
                let Some(&vi) = cache_idx.get(&v) else {
                    return invalid(format!("edge references unknown cache {v}"));
                };
                edges.push((ui, vi, d));
            }
        }
        let mbs: Vec<f64> = match mbs.iter().position(Option::is_none) {
            Some(i) => return invalid(format!("user {} is not connected to the macro cell", self.users[i])),
            None => mbs.into_iter().flatten().collect(),
        };
        let n_files = self.demand.iter().map(|d| d.1).max().unwrap_or(0);
        let mut rates = vec![vec![0.0; n_files]; self.users.len()];
        for &(u, n, r) in &self.demand {
            let Some(&ui) = user_idx.get(&u) else {
                return invalid(format!("demand references unknown user {u}"));
            };
            if n == 0 {
                return invalid("file ids are 1-based");
            }
            rates[ui][n - 1] += r;
        }
        Ok(FemtoInstance {
            net: BipartiteNet::new(mbs, sbs.iter().map(|c| c.capacity).collect(), &edges)?,
            demand: DemandMatrix::new(rates)?,
            cache_ids: sbs.iter().map(|c| c.id).collect(),
        })
    }
}

impl FemtoInstance {
    /// Placement keyed by external cache id with 1-based file ids.
    pub fn export(&self, pl: &Placement) -> BTreeMap<u64, Vec<usize>> {
        self.cache_ids
            .iter()
            .zip(&pl.sets)
            .map(|(&id, s)| (id, s.iter().map(|n| n + 1).collect()))
            .collect()
    }
}

/// Random femtocaching instance: each user links to each small cell with
/// probability `p_link`, delays uniform below the macro delay of 1, demand
/// uniform in `[0, 1)`.
pub fn random_femto_instance(
    n_users: usize,
    capacities: &[usize],
    n_files: usize,
    p_link: f64,
    rng: &mut impl Rng,
) -> Result<(BipartiteNet, DemandMatrix)> {
    let mut edges = Vec::new();
    for u in 0..n_users {
        for v in 0..capacities.len() {
            if rng.random::<f64>() < p_link {
                edges.push((u, v, rng.random::<f64>()));
            }
        }
    }
    let rates = (0..n_users)
        .map(|_| (0..n_files).map(|_| rng.random::<f64>()).collect())
        .collect();
    Ok((
        BipartiteNet::new(vec![1.0; n_users], capacities.to_vec(), &edges)?,
        DemandMatrix::new(rates)?,
    ))
}
