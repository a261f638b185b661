//! Online caching and routing on a bipartite network of caches and user
//! locations: optimal fractional routing with its LP duals, projected
//! supergradient ascent on the cache configuration, the best static
//! configuration in hindsight, and multi-cache LRU baselines.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::eviction::{Cache, PolicyKind, SimConfig};
use crate::netcache::BipartiteNet;
use crate::online::{diameter, project_capped_simplex, project_capped_simplex_general, RegretTrace};
use crate::traces::Trace;

/// Caches with capacities and, per user location, the reachable caches
/// with the utility of serving a unit of content from each. The utility of
/// cache `v` for user `u` and content `n` is `d[u][v] * scale[n]` unless an
/// explicit override is set.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityNet {
    capacities: Vec<usize>,
    n_files: usize,
    reach: Vec<Vec<(usize, f64)>>,
    scale: Option<Vec<f64>>,
    overrides: BTreeMap<(usize, usize, usize), f64>,
}

impl UtilityNet {
    /// `edges` holds `(user, cache, utility)` triples, all 0-based.
    pub fn new(capacities: Vec<usize>, n_users: usize, n_files: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if n_files == 0 {
            return invalid("catalog must be nonempty");
        }
        let mut reach = vec![Vec::new(); n_users];
        for &(u, v, d) in edges {
            if u >= n_users || v >= capacities.len() {
                return invalid(format!("edge ({u}, {v}) references an unknown node"));
            }
            if !(d.is_finite() && d > 0.0) {
                return invalid(format!("utility on edge ({u}, {v}) must be positive, got {d}"));
            }
            if reach[u].iter().any(|&(w, _)| w == v) {
                return invalid(format!("duplicate edge ({u}, {v})"));
            }
            reach[u].push((v, d));
        }
        Ok(Self {
            capacities,
            n_files,
            reach,
            scale: None,
            overrides: BTreeMap::new(),
        })
    }

    /// Utilities `d0_u - delay` of a femtocaching network; links that save
    /// nothing are dropped.
    pub fn from_femto(net: &BipartiteNet, n_files: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for v in 0..net.n_caches() {
            for &(u, d) in net.links(v) {
                let gain = net.mbs_delay()[u] - d;
                if gain > 0.0 {
                    edges.push((u, v, gain));
                }
            }
        }
        Self::new(net.capacities().to_vec(), net.n_users(), n_files, &edges)
    }

    /// Multiplies every utility for content `n` by `scale[n]`.
    pub fn with_content_scale(mut self, scale: Vec<f64>) -> Result<Self> {
        if scale.len() != self.n_files || scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return invalid("content scale must hold one positive value per file");
        }
        self.scale = Some(scale);
        Ok(self)
    }

    /// Sets the utility of cache `v` for user `u` and content `n` directly.
    pub fn with_utility(mut self, v: usize, u: usize, n: usize, d: f64) -> Result<Self> {
        if u >= self.reach.len() || n >= self.n_files || !self.reach[u].iter().any(|&(w, _)| w == v) {
            return invalid(format!("no link between cache {v} and user {u} for file {n}"));
        }
        if !(d.is_finite() && d > 0.0) {
            return invalid("utility must be positive");
        }
        self.overrides.insert((v, u, n), d);
        Ok(self)
    }

    pub fn n_caches(&self) -> usize {
        self.capacities.len()
    }

    pub fn n_users(&self) -> usize {
        self.reach.len()
    }

    pub fn n_files(&self) -> usize {
        self.n_files
    }

    pub fn capacities(&self) -> &[usize] {
        &self.capacities
    }

    /// Caches reachable from user `u`.
    pub fn reachable(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.reach[u].iter().map(|&(v, _)| v)
    }

    /// Reachable caches of user `u` with their utilities for content `n`.
    pub fn utilities(&self, u: usize, n: usize) -> Vec<(usize, f64)> {
        let s = self.scale.as_ref().map_or(1.0, |s| s[n]);
        self.reach[u]
            .iter()
            .map(|&(v, d)| (v, self.overrides.get(&(v, u, n)).copied().unwrap_or(d * s)))
            .collect()
    }

    /// Largest utility on any link, `d_(1)`.
    pub fn max_utility(&self) -> f64 {
        let smax = self.scale.as_ref().map_or(1.0, |s| s.iter().cloned().fold(0.0, f64::max));
        let base = self.reach.iter().flatten().map(|&(_, d)| d * smax).fold(0.0, f64::max);
        self.overrides.values().cloned().fold(base, f64::max)
    }

    /// Largest number of caches reachable from one location.
    pub fn degree(&self) -> usize {
        self.reach.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Diameter of the feasible set of fractional placements.
    pub fn diameter(&self) -> f64 {
        self.capacities
            .iter()
            .map(|&b| diameter(b, self.n_files).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Bound on the supergradient norm, `d_(1) sqrt(deg)`.
    pub fn gradient_bound(&self) -> f64 {
        self.max_utility() * (self.degree() as f64).sqrt()
    }

    /// `d_(1) sqrt(2 deg V B T)` with `B` the largest capacity.
    pub fn regret_bound(&self, horizon: usize) -> f64 {
        let b = self.capacities.iter().copied().max().unwrap_or(0) as f64;
        self.max_utility() * (2.0 * self.degree() as f64 * self.n_caches() as f64 * b * horizon as f64).sqrt()
    }

    /// Regret bound for the step `1/sqrt(t)`: `D^2 sqrt(T)/2 + (sqrt(T) - 1/2) K^2`.
    pub fn varying_step_bound(&self, horizon: usize) -> f64 {
        let st = (horizon as f64).sqrt();
        self.diameter().powi(2) * st / 2.0 + (st - 0.5) * self.gradient_bound().powi(2)
    }
}

/// The three-cache, four-location network used for the policy comparison:
/// utilities 1, 2 and 100 at caches 0, 1 and 2, each of capacity `b`.
/// Location 0 reaches caches 0 and 2, location 1 caches 1 and 2, location 2
/// caches 0 and 1, location 3 only cache 2.
pub fn example_network(n_files: usize, b: usize) -> Result<UtilityNet> {
    let d = [1.0, 2.0, 100.0];
    let links = [(0, 0), (0, 2), (1, 1), (1, 2), (2, 0), (2, 1), (3, 2)];
    let edges: Vec<_> = links.iter().map(|&(u, v)| (u, v, d[v])).collect();
    UtilityNet::new(vec![b; 3], 4, n_files, &edges)
}

/// Fractional cache configuration `y[v][n]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionalPlacement {
    pub y: Vec<Vec<f64>>,
}

impl FractionalPlacement {
    pub fn zeros(n_caches: usize, n_files: usize) -> Self {
        Self {
            y: vec![vec![0.0; n_files]; n_caches],
        }
    }

    /// Checks box and per-cache budget constraints up to `tol`.
    pub fn check(&self, capacities: &[usize], tol: f64) -> Result<()> {
        if self.y.len() != capacities.len() {
            return invalid("placement and network disagree on the number of caches");
        }
        for (v, row) in self.y.iter().enumerate() {
            if row.iter().any(|&x| !(x >= -tol && x <= 1.0 + tol)) {
                return invalid(format!("cache {v} has an entry outside [0, 1]"));
            }
            let s: f64 = row.iter().sum();
            if s > capacities[v] as f64 + tol {
                return invalid(format!("cache {v} stores {s}, capacity {}", capacities[v]));
            }
        }
        Ok(())
    }
}

/// Optimal routing of one request with the LP multipliers: `alpha` for the
/// unit-demand constraint and `beta[k]` for the availability constraint of
/// the `k`-th reachable cache.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Routing {
    pub f: Vec<f64>,
    pub utility: f64,
    pub alpha: f64,
    pub beta: Vec<f64>,
}

/// Fills the request from reachable caches in decreasing utility order,
/// taking `min(remaining, y_k)` from each. `alpha` is the utility of the
/// cache that completes the request (0 if none does) and
/// `beta_k = max(d_k - alpha, 0)`.
pub fn route_by_inspection(y: &[f64], d: &[f64]) -> Result<Routing> {
    if y.len() != d.len() {
        return invalid("placement and utility vectors differ in length");
    }
    if d.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return invalid("utilities must be positive");
    }
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    let mut f = vec![0.0; d.len()];
    let mut routed = 0.0f64;
    let mut utility = 0.0;
    let mut alpha = 0.0;
    for &k in &order {
        let take = (1.0 - routed).min(y[k].max(0.0));
        f[k] = take;
        routed += take;
        utility += d[k] * take;
        if routed >= 1.0 {
            alpha = d[k];
            break;
        }
    }
    let beta = d.iter().map(|&dk| (dk - alpha).max(0.0)).collect();
    Ok(Routing { f, utility, alpha, beta })
}

fn check_request(net: &UtilityNet, n: usize, u: usize) -> Result<()> {
    if n >= net.n_files || u >= net.n_users() {
        return invalid(format!("request (file {n}, location {u}) outside the network"));
    }
    Ok(())
}

fn route(net: &UtilityNet, y: &FractionalPlacement, n: usize, u: usize) -> Result<(Vec<usize>, Routing)> {
    check_request(net, n, u)?;
    let links = net.utilities(u, n);
    let caches: Vec<usize> = links.iter().map(|l| l.0).collect();
    let ys: Vec<f64> = caches.iter().map(|&v| y.y[v][n]).collect();
    let d: Vec<f64> = links.iter().map(|l| l.1).collect();
    Ok((caches, route_by_inspection(&ys, &d)?))
}

/// Utility `J(y)` of serving content `n` (0-based) at location `u`.
pub fn request_utility(net: &UtilityNet, y: &FractionalPlacement, n: usize, u: usize) -> Result<f64> {
    Ok(route(net, y, n, u)?.1.utility)
}

/// Supergradient of `J` at `y` for one request, as `(cache, value)` pairs.
pub fn supergradient(net: &UtilityNet, y: &FractionalPlacement, n: usize, u: usize) -> Result<Vec<(usize, f64)>> {
    let (caches, r) = route(net, y, n, u)?;
    Ok(caches.into_iter().zip(r.beta).collect())
}

fn project_row(row: &mut [f64], b: usize) -> Result<()> {
    if b == 0 {
        row.iter_mut().for_each(|x| *x = 0.0);
        return Ok(());
    }
    let p = project_capped_simplex(row, b)?;
    row.copy_from_slice(&p);
    Ok(())
}

/// One BSCA update for a request of content `n` at location `u` (0-based):
/// route on the current `y`, step along the supergradient and project each
/// touched cache onto its own capped simplex. With `prefetch` set to
/// `(costs[v][n], y_prev)`, caches whose share of `n` grew in the previous
/// slot are charged `costs[v][n]`.
pub fn bsca_step(
    y: &FractionalPlacement,
    n: usize,
    u: usize,
    net: &UtilityNet,
    eta: f64,
    prefetch: Option<(&[Vec<f64>], &FractionalPlacement)>,
) -> Result<(FractionalPlacement, Routing)> {
    if !(eta > 0.0 && eta.is_finite()) {
        return invalid("step size must be positive");
    }
    let (caches, routing) = route(net, y, n, u)?;
    let mut g = vec![0.0; net.n_caches()];
    for (&v, &b) in caches.iter().zip(&routing.beta) {
        g[v] += b;
    }
    if let Some((costs, prev)) = prefetch {
        for v in 0..net.n_caches() {
            if y.y[v][n] - prev.y[v][n] > 0.0 {
                g[v] -= costs[v][n];
            }
        }
    }
    let mut next = y.clone();
    for (v, &gv) in g.iter().enumerate() {
        if gv != 0.0 {
            next.y[v][n] += eta * gv;
            project_row(&mut next.y[v], net.capacities[v])?;
        }
    }
    Ok((next, routing))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BscaStep {
    Fixed(f64),
    /// `D / (K sqrt(T))` for the trace length `T`.
    HorizonOptimal,
    /// `1 / sqrt(t)`.
    InvSqrt,
    /// Horizon-optimal steps over epochs of length 1, 2, 4, ...
    Doubling,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BscaConfig {
    pub step: Option<BscaStep>,
    /// Per-cache, per-file cost of growing a cached share.
    pub prefetch_costs: Option<Vec<Vec<f64>>>,
}

fn request_indices(trace: &Trace, net: &UtilityNet) -> Result<Vec<(usize, usize)>> {
    trace
        .requests
        .iter()
        .map(|r| {
            if r.content == 0 || r.content > net.n_files || r.location == 0 || r.location > net.n_users() {
                invalid(format!(
                    "request (content {}, location {}) outside the network",
                    r.content, r.location
                ))
            } else {
                Ok((r.content - 1, r.location - 1))
            }
        })
        .collect()
}

/// Per-slot utility of BSCA from the empty configuration. Each request is
/// routed on the configuration in place before its update.
pub fn bsca_utilities(trace: &Trace, net: &UtilityNet, cfg: &BscaConfig) -> Result<(Vec<f64>, FractionalPlacement)> {
    let reqs = request_indices(trace, net)?;
    if let Some(c) = &cfg.prefetch_costs {
        if c.len() != net.n_caches() || c.iter().any(|r| r.len() != net.n_files) {
            return invalid("prefetch costs must be a caches x files matrix");
        }
    }
    let ratio = net.diameter() / net.gradient_bound();
    let horizon = reqs.len().max(1) as f64;
    let step = cfg.step.unwrap_or(BscaStep::HorizonOptimal);
    let mut y = FractionalPlacement::zeros(net.n_caches(), net.n_files);
    let mut prev = y.clone();
    let mut out = Vec::with_capacity(reqs.len());
    for (t, &(n, u)) in reqs.iter().enumerate() {
        let eta = match step {
            BscaStep::Fixed(e) => e,
            BscaStep::HorizonOptimal => ratio / horizon.sqrt(),
            BscaStep::InvSqrt => 1.0 / ((t + 1) as f64).sqrt(),
            BscaStep::Doubling => {
                let epoch = (usize::BITS - (t + 1).leading_zeros() - 1) as i32;
                ratio / 2f64.powi(epoch).sqrt()
            }
        };
        let pf = cfg.prefetch_costs.as_deref().map(|c| (c, &prev));
        let (next, routing) = bsca_step(&y, n, u, net, eta, pf)?;
        out.push(routing.utility);
        prev = std::mem::replace(&mut y, next);
    }
    Ok((out, y))
}

/// Best static fractional configuration for a request sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticSolution {
    pub y: FractionalPlacement,
    /// Total utility of `y` over the sequence.
    pub utility: f64,
    pub iterations: usize,
    /// Whether the best value improved by at most a relative `1e-4` over
    /// the last tenth of the iterations.
    pub converged: bool,
}

pub const HINDSIGHT_ITERS: usize = 50_000;

/// Maximizes the total utility of a fixed configuration by projected
/// supergradient ascent on the aggregated requests, keeping the best
/// iterate. Steps are `D / (|g_k| sqrt(k))`, normalized by the observed
/// supergradient rather than its worst-case bound.
pub fn best_static_bipartite(trace: &Trace, net: &UtilityNet, iterations: Option<usize>) -> Result<StaticSolution> {
    let reqs = request_indices(trace, net)?;
    let iterations = iterations.unwrap_or(HINDSIGHT_ITERS).max(1);
    let mut counts: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &r in &reqs {
        *counts.entry(r).or_default() += 1.0;
    }
    let total = reqs.len() as f64;
    let pairs: Vec<(usize, usize, f64, Vec<(usize, f64)>)> = counts
        .into_iter()
        .map(|((n, u), c)| (n, u, c / total.max(1.0), net.utilities(u, n)))
        .filter(|p| !p.3.is_empty())
        .collect();
    let mut y = FractionalPlacement::zeros(net.n_caches(), net.n_files);
    let mut best = (y.clone(), 0.0);
    let mut best_at_checkpoint = 0.0;
    let checkpoint = iterations - iterations / 10;
    let mut g = vec![vec![0.0; net.n_files]; net.n_caches()];
    let mut ys = Vec::new();
    let mut ds = Vec::new();
    for k in 1..=iterations {
        g.iter_mut().for_each(|r| r.iter_mut().for_each(|x| *x = 0.0));
        let mut value = 0.0;
        for (n, _, w, links) in &pairs {
            ys.clear();
            ds.clear();
            ys.extend(links.iter().map(|&(v, _)| y.y[v][*n]));
            ds.extend(links.iter().map(|&(_, d)| d));
            let r = route_by_inspection(&ys, &ds)?;
            value += w * r.utility;
            for (&(v, _), b) in links.iter().zip(&r.beta) {
                g[v][*n] += w * b;
            }
        }
        if value > best.1 {
            best = (y.clone(), value);
        }
        if k == checkpoint {
            best_at_checkpoint = best.1;
        }
        let gnorm = g.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        let eta = net.diameter() / (gnorm.max(f64::MIN_POSITIVE) * (k as f64).sqrt());
        for v in 0..net.n_caches() {
            if g[v].iter().all(|&x| x == 0.0) {
                continue;
            }
            let z: Vec<f64> = y.y[v].iter().zip(&g[v]).map(|(a, b)| a + eta * b).collect();
            y.y[v] = if net.capacities[v] == 0 {
                vec![0.0; net.n_files]
            } else {
                project_capped_simplex_general(&z, net.capacities[v])?
            };
        }
    }
    let converged = best.1 - best_at_checkpoint <= 1e-4 * best.1.abs();
    Ok(StaticSolution {
        utility: best.1 * total,
        y: best.0,
        iterations,
        converged,
    })
}

/// Regret of a per-slot utility sequence against a fixed configuration.
pub fn regret_against(trace: &Trace, net: &UtilityNet, utility: Vec<f64>, y_star: &FractionalPlacement) -> Result<RegretTrace> {
    let reqs = request_indices(trace, net)?;
    if utility.len() != reqs.len() {
        return invalid("one utility per request expected");
    }
    let mut hindsight_cum = Vec::with_capacity(reqs.len());
    let mut regret = Vec::with_capacity(reqs.len());
    let (mut hs, mut ps) = (0.0, 0.0);
    for (&(n, u), &x) in reqs.iter().zip(&utility) {
        hs += request_utility(net, y_star, n, u)?;
        ps += x;
        hindsight_cum.push(hs);
        regret.push(hs - ps);
    }
    Ok(RegretTrace {
        utility,
        hindsight_cum,
        regret,
        total_utility: ps,
        hindsight_utility: hs,
        final_regret: hs - ps,
    })
}

/// Runs BSCA and measures regret against the best static configuration.
pub fn run_bsca(trace: &Trace, net: &UtilityNet, cfg: &BscaConfig) -> Result<RegretTrace> {
    let star = best_static_bipartite(trace, net, None)?;
    let (u, _) = bsca_utilities(trace, net, cfg)?;
    regret_against(trace, net, u, &star.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Baseline {
    MultiLru,
    Lazy,
}

fn baseline_utilities(trace: &Trace, net: &UtilityNet, kind: Baseline) -> Result<Vec<f64>> {
    let reqs = request_indices(trace, net)?;
    let mut caches: Vec<Option<Cache>> = net
        .capacities
        .iter()
        .map(|&b| (b > 0).then(|| Cache::new(&SimConfig::new(PolicyKind::Lru, b))).transpose())
        .collect::<Result<_>>()?;
    let holds = |c: &[Option<Cache>], v: usize, n: usize| c[v].as_ref().is_some_and(|c| c.contains(n));
    let mut out = Vec::with_capacity(reqs.len());
    for &(n, u) in &reqs {
        let links = net.utilities(u, n);
        let served = links
            .iter()
            .filter(|&&(v, _)| holds(&caches, v, n))
            .map(|&(_, d)| d)
            .fold(0.0, f64::max);
        out.push(served);
        // The update target is the reachable cache of highest utility.
        let target = links
            .iter()
            .filter(|&&(v, _)| caches[v].is_some())
            .fold(None, |acc: Option<(usize, f64)>, &(v, d)| match acc {
                Some((_, bd)) if bd >= d => acc,
                _ => Some((v, d)),
            });
        let Some((t, _)) = target else { continue };
        let update = match kind {
            Baseline::MultiLru => true,
            Baseline::Lazy => holds(&caches, t, n) || served == 0.0,
        };
        if update {
            caches[t].as_mut().expect("target has storage").request(n);
        }
    }
    Ok(out)
}

/// Multi-cache LRU: serve from the best reachable holder and run LRU on the
/// highest-utility reachable cache.
pub fn mlru_utilities(trace: &Trace, net: &UtilityNet) -> Result<Vec<f64>> {
    baseline_utilities(trace, net, Baseline::MultiLru)
}

/// Lazy LRU: like [`mlru_utilities`], but the target cache is left untouched
/// when another reachable cache already holds the file.
pub fn lazy_lru_utilities(trace: &Trace, net: &UtilityNet) -> Result<Vec<f64>> {
    baseline_utilities(trace, net, Baseline::Lazy)
}

pub fn mlru_baseline(trace: &Trace, net: &UtilityNet) -> Result<RegretTrace> {
    let star = best_static_bipartite(trace, net, None)?;
    regret_against(trace, net, mlru_utilities(trace, net)?, &star.y)
}

pub fn lazy_lru_baseline(trace: &Trace, net: &UtilityNet) -> Result<RegretTrace> {
    let star = best_static_bipartite(trace, net, None)?;
    regret_against(trace, net, lazy_lru_utilities(trace, net)?, &star.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::online::{run_oga, StepSize};
    use crate::popularity::PowerLaw;
    use crate::traces::gen_irm_located;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dual value `min_alpha alpha + sum_k max(d_k - alpha, 0) y_k`, which is
    /// piecewise linear with breakpoints at 0 and the utilities.
    fn dual_oracle(y: &[f64], d: &[f64]) -> f64 {
        std::iter::once(0.0)
            .chain(d.iter().copied())
            .map(|a| a + d.iter().zip(y).map(|(&dk, &yk)| (dk - a).max(0.0) * yk).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn routing_examples() {
        let r = route_by_inspection(&[1.0, 0.3], &[5.0, 2.0]).unwrap();
        assert_eq!(r.f, vec![1.0, 0.0]);
        assert_eq!((r.utility, r.alpha), (5.0, 5.0));
        assert_eq!(r.beta, vec![0.0, 0.0]);

        let r = route_by_inspection(&[0.5, 0.7], &[100.0, 1.0]).unwrap();
        assert_eq!(r.f, vec![0.5, 0.5]);
        assert!((r.utility - 50.5).abs() < 1e-12);
        assert_eq!(r.alpha, 1.0);
        assert_eq!(r.beta, vec![99.0, 0.0]);

        let r = route_by_inspection(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert_eq!((r.utility, r.alpha), (0.0, 0.0));
        assert_eq!(r.beta, vec![3.0, 4.0]);
        assert!(route_by_inspection(&[0.0], &[0.0]).is_err());
    }

    #[test]
    fn tied_utilities_get_zero_beta() {
        let r = route_by_inspection(&[0.6, 0.6], &[2.0, 2.0]).unwrap();
        assert_eq!(r.alpha, 2.0);
        assert_eq!(r.beta, vec![0.0, 0.0]);
        assert!((r.utility - 2.0).abs() < 1e-12);
    }

    #[test]
    fn step_from_empty_single_cache() {
        let net = UtilityNet::new(vec![2], 1, 3, &[(0, 0, 1.0)]).unwrap();
        let y = FractionalPlacement::zeros(1, 3);
        let (next, r) = bsca_step(&y, 1, 0, &net, 0.1, None).unwrap();
        assert_eq!(r.utility, 0.0);
        assert!((next.y[0][1] - 0.1).abs() < 1e-15);
        assert_eq!(next.y[0][0], 0.0);
        // Fully served request with no profitable dual: no change.
        let full = FractionalPlacement {
            y: vec![vec![0.0, 1.0, 0.0]],
        };
        let (same, _) = bsca_step(&full, 1, 0, &net, 0.1, None).unwrap();
        assert_eq!(same, full);
    }

    #[test]
    fn prefetch_cost_slows_growth() {
        let net = UtilityNet::new(vec![1], 1, 2, &[(0, 0, 1.0)]).unwrap();
        let costs = vec![vec![0.5, 0.5]];
        let prev = FractionalPlacement::zeros(1, 2);
        let y = FractionalPlacement {
            y: vec![vec![0.1, 0.0]],
        };
        let (a, _) = bsca_step(&y, 0, 0, &net, 0.1, Some((&costs, &prev))).unwrap();
        let (b, _) = bsca_step(&y, 0, 0, &net, 0.1, None).unwrap();
        assert!((a.y[0][0] - 0.15).abs() < 1e-12);
        assert!((b.y[0][0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn single_cache_matches_oga() {
        let w = vec![3.0, 1.0, 2.0, 0.5, 1.5];
        let net = UtilityNet::new(vec![2], 1, 5, &[(0, 0, 1.0)])
            .unwrap()
            .with_content_scale(w.clone())
            .unwrap();
        let pop = PowerLaw::new(0.8, 5).unwrap().to_popularity();
        let trace = gen_irm_located(&pop, 2000, 1, 4).unwrap();
        let cfg = BscaConfig {
            step: Some(BscaStep::Fixed(0.05)),
            prefetch_costs: None,
        };
        let (bu, _) = bsca_utilities(&trace, &net, &cfg).unwrap();
        let oga = run_oga(&trace.contents(), &w, 2, StepSize::Fixed(0.05)).unwrap();
        for (a, b) in bu.iter().zip(&oga.utility) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn hindsight_trivial_cases() {
        let net = UtilityNet::new(vec![1], 1, 1, &[(0, 0, 2.5)]).unwrap();
        let trace = Trace::from_contents(&[1, 1, 1]).unwrap();
        let trace = Trace::new(
            trace.requests.iter().map(|r| crate::traces::Request { location: 1, ..*r }).collect(),
            Default::default(),
        )
        .unwrap();
        let s = best_static_bipartite(&trace, &net, Some(2000)).unwrap();
        assert!((s.utility - 7.5).abs() < 1e-9);
        assert!((s.y.y[0][0] - 1.0).abs() < 1e-12);

        let net = UtilityNet::new(vec![1, 1], 1, 1, &[(0, 0, 2.0), (0, 1, 1.0)]).unwrap();
        let s = best_static_bipartite(&trace, &net, Some(2000)).unwrap();
        assert!((s.utility - 6.0).abs() < 1e-9);
        assert!((s.y.y[0][0] - 1.0).abs() < 1e-12);
    }

    fn located(ids: &[(usize, usize)]) -> Trace {
        Trace::new(
            ids.iter()
                .enumerate()
                .map(|(t, &(c, l))| crate::traces::Request {
                    time: t as f64,
                    content: c,
                    location: l,
                })
                .collect(),
            Default::default(),
        )
        .unwrap()
    }

    #[test]
    fn hindsight_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let edges = [
                (0, 0, rng.random_range(0.5..3.0)),
                (1, 0, rng.random_range(0.5..3.0)),
                (1, 1, rng.random_range(0.5..3.0)),
            ];
            let net = UtilityNet::new(vec![1, 1], 2, 3, &edges).unwrap();
            let reqs: Vec<(usize, usize)> = (0..60).map(|_| (rng.random_range(1..=3), rng.random_range(1..=2))).collect();
            let trace = located(&reqs);
            let s = best_static_bipartite(&trace, &net, None).unwrap();
            let total = |y: &FractionalPlacement| -> f64 {
                reqs.iter().map(|&(c, l)| request_utility(&net, y, c - 1, l - 1).unwrap()).sum()
            };
            let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
            let mut best = 0.0f64;
            let mut y = FractionalPlacement::zeros(2, 3);
            for &a in &grid {
                for &b in &grid {
                    for &c in &grid {
                        if a + b + c > 1.0 + 1e-9 {
                            continue;
                        }
                        y.y[0] = vec![a, b, c];
                        for &e in &grid {
                            for &f in &grid {
                                for &g in &grid {
                                    if e + f + g > 1.0 + 1e-9 {
                                        continue;
                                    }
                                    y.y[1] = vec![e, f, g];
                                    best = best.max(total(&y));
                                }
                            }
                        }
                    }
                }
            }
            assert!(s.utility >= 0.99 * best, "hindsight {} grid {best}", s.utility);
            s.y.check(net.capacities(), 1e-9).unwrap();
            assert!((total(&s.y) - s.utility).abs() < 1e-6 * best);
        }
    }

    #[test]
    fn baselines_reduce_to_lru() {
        let net = UtilityNet::new(vec![2], 1, 4, &[(0, 0, 1.0)]).unwrap();
        let ids = [1, 2, 3, 1, 2, 4, 2, 1];
        let trace = located(&ids.iter().map(|&c| (c, 1)).collect::<Vec<_>>());
        let mut lru = Cache::new(&SimConfig::new(PolicyKind::Lru, 2)).unwrap();
        let expect: Vec<f64> = ids.iter().map(|&c| if lru.request(c - 1) { 1.0 } else { 0.0 }).collect();
        assert_eq!(mlru_utilities(&trace, &net).unwrap(), expect);
        assert_eq!(lazy_lru_utilities(&trace, &net).unwrap(), expect);
    }

    #[test]
    fn lazy_skips_when_another_cache_holds() {
        // Location 0 reaches caches 0 (utility 1) and 1 (utility 5);
        // location 1 reaches only cache 0.
        let net = UtilityNet::new(vec![1, 1], 2, 2, &[(0, 0, 1.0), (0, 1, 5.0), (1, 0, 1.0)]).unwrap();
        let trace = located(&[(1, 2), (1, 1), (1, 1)]);
        // Lazy: file sits in cache 0 after the first request; location 0 is
        // served there and cache 1 never receives it.
        assert_eq!(lazy_lru_utilities(&trace, &net).unwrap(), vec![0.0, 1.0, 1.0]);
        // Multi-LRU inserts into cache 1 on the second request.
        assert_eq!(mlru_utilities(&trace, &net).unwrap(), vec![0.0, 1.0, 5.0]);
    }

    #[test]
    fn bsca_regret_within_bounds() {
        let net = example_network(20, 3).unwrap();
        let pop = PowerLaw::new(0.8, 20).unwrap().to_popularity();
        let trace = gen_irm_located(&pop, 3000, 4, 8).unwrap();
        let star = best_static_bipartite(&trace, &net, Some(5000)).unwrap();
        for (step, bound) in [
            (BscaStep::HorizonOptimal, net.regret_bound(3000)),
            (BscaStep::InvSqrt, net.varying_step_bound(3000)),
        ] {
            let cfg = BscaConfig {
                step: Some(step),
                prefetch_costs: None,
            };
            let (u, y) = bsca_utilities(&trace, &net, &cfg).unwrap();
            y.check(net.capacities(), 1e-9).unwrap();
            let r = regret_against(&trace, &net, u, &star.y).unwrap();
            assert!(r.final_regret <= bound, "{step:?}: {} > {bound}", r.final_regret);
        }
    }

    #[test]
    fn from_femto_keeps_positive_gains() {
        let femto = BipartiteNet::new(vec![1.0, 1.0], vec![1], &[(0, 0, 0.25), (1, 0, 1.0)]).unwrap();
        let net = UtilityNet::from_femto(&femto, 3).unwrap();
        assert_eq!(net.utilities(0, 0), vec![(0, 0.75)]);
        assert!(net.utilities(1, 0).is_empty());
    }

    fn arb_net() -> impl Strategy<Value = (UtilityNet, u64)> {
        (1usize..4, 1usize..4, 1usize..5, any::<u64>()).prop_map(|(caches, users, files, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut edges = Vec::new();
            for u in 0..users {
                for v in 0..caches {
                    if rng.random::<f64>() < 0.7 {
                        edges.push((u, v, rng.random_range(0.1..10.0)));
                    }
                }
            }
            let caps = (0..caches).map(|_| rng.random_range(1..3)).collect();
            (UtilityNet::new(caps, users, files, &edges).unwrap(), seed)
        })
    }

    fn random_point(net: &UtilityNet, rng: &mut ChaCha8Rng) -> FractionalPlacement {
        let mut y = FractionalPlacement::zeros(net.n_caches(), net.n_files());
        for v in 0..net.n_caches() {
            let row: Vec<f64> = (0..net.n_files()).map(|_| rng.random_range(-0.5..1.5)).collect();
            y.y[v] = project_capped_simplex_general(&row, net.capacities()[v]).unwrap();
        }
        y
    }

    proptest! {
        #[test]
        fn strong_duality(y in prop::collection::vec(0.0f64..1.0, 1..6), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d: Vec<f64> = y.iter().map(|_| rng.random_range(0.1..10.0)).collect();
            let r = route_by_inspection(&y, &d).unwrap();
            let dual = r.alpha + r.beta.iter().zip(&y).map(|(b, yk)| b * yk).sum::<f64>();
            prop_assert!((dual - r.utility).abs() < 1e-9);
            prop_assert!((dual_oracle(&y, &d) - r.utility).abs() < 1e-9);
            prop_assert!(r.f.iter().sum::<f64>() <= 1.0 + 1e-12);
            for k in 0..y.len() {
                prop_assert!(r.f[k] <= y[k] + 1e-15);
                // Complementary slackness.
                prop_assert!(r.beta[k] * (y[k] - r.f[k]) < 1e-12);
            }
            prop_assert!(r.alpha * (1.0 - r.f.iter().sum::<f64>()) < 1e-12);
        }

        #[test]
        fn supergradient_and_concavity((net, seed) in arb_net()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            for _ in 0..10 {
                let u = rng.random_range(0..net.n_users());
                let n = rng.random_range(0..net.n_files());
                let y = random_point(&net, &mut rng);
                let y2 = random_point(&net, &mut rng);
                let j = |p: &FractionalPlacement| request_utility(&net, p, n, u).unwrap();
                let g = supergradient(&net, &y, n, u).unwrap();
                let lin: f64 = g.iter().map(|&(v, b)| b * (y2.y[v][n] - y.y[v][n])).sum();
                prop_assert!(j(&y) >= j(&y2) - lin - 1e-9);
                let lam: f64 = rng.random();
                let mid = FractionalPlacement {
                    y: y.y.iter().zip(&y2.y).map(|(a, b)| a.iter().zip(b).map(|(p, q)| lam * p + (1.0 - lam) * q).collect()).collect(),
                };
                prop_assert!(j(&mid) >= lam * j(&y) + (1.0 - lam) * j(&y2) - 1e-9);
            }
        }

        #[test]
        fn rowwise_projection_matches_joint(seed in any::<u64>()) {
            // Dykstra's method on the box and the per-cache half-spaces.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let caps = [1usize, 2, 3];
            let z: Vec<Vec<f64>> = (0..3).map(|_| (0..5).map(|_| rng.random_range(-1.0..2.0)).collect()).collect();
            let flat: Vec<f64> = z.concat();
            let mut x = flat.clone();
            let mut p = vec![0.0; 15];
            let mut q = vec![0.0; 15];
            for _ in 0..20_000 {
                let a: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| (xi + pi).clamp(0.0, 1.0)).collect();
                for i in 0..15 { p[i] += x[i] - a[i]; }
                let mut b: Vec<f64> = a.iter().zip(&q).map(|(ai, qi)| ai + qi).collect();
                for (v, &c) in caps.iter().enumerate() {
                    let row = &mut b[5 * v..5 * v + 5];
                    let excess = row.iter().sum::<f64>() - c as f64;
                    if excess > 0.0 { row.iter_mut().for_each(|r| *r -= excess / 5.0); }
                }
                for i in 0..15 { q[i] += a[i] - b[i]; }
                x = b;
            }
            for v in 0..3 {
                let row = project_capped_simplex_general(&z[v], caps[v]).unwrap();
                for k in 0..5 {
                    prop_assert!((row[k] - x[5 * v + k]).abs() < 1e-8, "{} vs {}", row[k], x[5 * v + k]);
                }
            }
        }
    }
}
