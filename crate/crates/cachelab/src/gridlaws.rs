//! Caching on a square torus grid: the replication-density relaxation,
//! power-of-4 rounding, the canonical diagonal placement, link-load
//! evaluation under shortest-path routing and scaling-slope fits.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::popularity::{Kahan, PopularityVector, PowerLaw};

/// Grid of `k` nodes arranged as a `sqrt(k) x sqrt(k)` torus, each with a
/// cache of `m_cache` contents, serving a catalog of `n_catalog` contents.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub k: u64,
    pub n_catalog: usize,
    pub m_cache: usize,
    pub pop: PopularityVector,
}

impl GridSpec {
    pub fn new(k: u64, m_cache: usize, pop: PopularityVector) -> Result<Self> {
        let side = isqrt(k);
        if k == 0 || side * side != k {
            return invalid(format!("node count {k} is not a perfect square"));
        }
        let n = pop.len();
        if m_cache >= n {
            return invalid(format!("cache size {m_cache} must be below catalog size {n}"));
        }
        if (n as u128) > (m_cache as u128) * (k as u128) {
            return invalid(format!(
                "catalog {n} exceeds total network storage {m_cache} x {k}"
            ));
        }
        if pop.probs().windows(2).any(|w| w[1] > w[0]) {
            return invalid("popularity must be sorted non-increasing");
        }
        Ok(Self {
            k,
            n_catalog: n,
            m_cache,
            pop,
        })
    }

    pub fn side(&self) -> u64 {
        isqrt(self.k)
    }
}

fn isqrt(k: u64) -> u64 {
    let mut s = (k as f64).sqrt() as u64;
    while s * s > k {
        s -= 1;
    }
    while (s + 1) * (s + 1) <= k {
        s += 1;
    }
    s
}

/// Optimal replication densities. Contents `1..l` (1-based) are stored
/// everywhere, contents `r..=N` at a single node, the rest in between.
#[derive(Debug, Clone, Serialize)]
pub struct DensityVector {
    pub d: Vec<f64>,
    pub l: usize,
    pub r: usize,
    pub cost: f64,
}

/// `sum_n (1/sqrt(d_n) - 1) p_n`.
pub fn density_cost(d: &[f64], p: &[f64]) -> f64 {
    let mut acc = Kahan::default();
    for (&dn, &pn) in d.iter().zip(p) {
        acc.add((1.0 / dn.sqrt() - 1.0) * pn);
    }
    acc.value()
}

/// Middle-set densities for the partition `(l, r)` (1-based, half-open
/// middle `[l, r)`), or `None` when the middle is empty.
fn middle_scale(q: &[f64], l: usize, r: usize, m: f64, k: f64) -> Option<f64> {
    let n = q.len();
    let mass: f64 = q[l - 1..r - 1].iter().sum();
    if mass <= 0.0 {
        return None;
    }
    Some((m - (l - 1) as f64 - (n + 1 - r) as f64 / k) / mass)
}

fn partition_at(q: &[f64], c: f64, k: f64) -> (usize, usize) {
    let up = q.partition_point(|&x| c * x >= 1.0);
    let mid = q.partition_point(|&x| c * x > 1.0 / k);
    (up + 1, mid.max(up) + 1)
}

/// Minimizes `sum (1/sqrt(d_n) - 1) p_n` subject to `1/K <= d_n <= 1` and
/// `sum d_n <= M`.
///
/// The solution has the form `d_n = clamp(c p_n^{2/3}, 1/K, 1)`. The
/// multiplier `c` is located by bisection on the monotone map
/// `c -> sum_n d_n(c)`, which fixes the partition `(l, r)`; `c` is then
/// recomputed in closed form from the partition.
pub fn solve_density(spec: &GridSpec) -> Result<DensityVector> {
    let p = spec.pop.probs();
    let n = p.len();
    let k = spec.k as f64;
    let m = spec.m_cache as f64;
    let q: Vec<f64> = p.iter().map(|x| x.powf(2.0 / 3.0)).collect();
    let total = |c: f64| -> f64 {
        let mut acc = Kahan::default();
        for &x in &q {
            acc.add((c * x).clamp(1.0 / k, 1.0));
        }
        acc.value()
    };

    let positive = q.iter().filter(|&&x| x > 0.0).count();
    let q_min = q[..positive].last().copied().unwrap_or(1.0);
    let mut hi = 1.0 / q_min;
    if total(hi) <= m {
        // Every requested content fits everywhere.
        let d: Vec<f64> = q
            .iter()
            .map(|&x| if x > 0.0 { 1.0 } else { 1.0 / k })
            .collect();
        let cost = density_cost(&d, p);
        return Ok(DensityVector {
            d,
            l: positive + 1,
            r: positive + 1,
            cost,
        });
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) < m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c_search = 0.5 * (lo + hi);
    let (l, r) = partition_at(&q, c_search, k);
    let c = middle_scale(&q, l, r, m, k).unwrap_or(c_search);

    let mut d = vec![0.0; n];
    for (i, di) in d.iter_mut().enumerate() {
        *di = if i + 1 < l {
            1.0
        } else if i + 1 >= r {
            1.0 / k
        } else {
            c * q[i]
        };
    }
    let slack = 1e-9;
    if d.iter().any(|&x| !(x >= 1.0 / k * (1.0 - slack) && x <= 1.0 + slack)) {
        return Err(Error::NotConverged(format!(
            "no valid density partition (l={l}, r={r}, c={c})"
        )));
    }
    for x in &mut d {
        *x = x.clamp(1.0 / k, 1.0);
    }
    let cost = density_cost(&d, p);
    Ok(DensityVector { d, l, r, cost })
}

/// Rounds each density down to a power of `1/4`, never below `4^-nu`
/// where `K = 4^nu`. Returns the rounded vector and how many entries
/// needed the floor clamp.
pub fn round_density(d: &[f64], k: u64) -> Result<(Vec<f64>, usize)> {
    let nu = log4_exact(k).ok_or_else(|| {
        Error::InvalidInput(format!("node count {k} is not a power of 4"))
    })?;
    let mut clamped = 0;
    let out = d
        .iter()
        .map(|&x| {
            let mut v = 1.0;
            for _ in 0..nu {
                if v <= x {
                    break;
                }
                v *= 0.25;
            }
            if v > x {
                clamped += 1;
            }
            v
        })
        .collect();
    Ok((out, clamped))
}

/// Exponent `nu` with `k = 4^nu`, if any.
pub fn log4_exact(k: u64) -> Option<u32> {
    if k == 0 || !k.is_power_of_two() || k.trailing_zeros() % 2 != 0 {
        return None;
    }
    Some(k.trailing_zeros() / 2)
}

/// Per-node content sets on a `side x side` torus; node `(row, col)` has
/// index `row * side + col`. Content ids are 0-based.
#[derive(Debug, Clone, Serialize)]
pub struct PlacementGrid {
    pub side: usize,
    pub nodes: Vec<Vec<usize>>,
}

impl PlacementGrid {
    pub fn max_load(&self) -> usize {
        self.nodes.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn replica_counts(&self, n_contents: usize) -> Vec<usize> {
        let mut counts = vec![0; n_contents];
        for node in &self.nodes {
            for &c in node {
                counts[c] += 1;
            }
        }
        counts
    }
}

/// Places contents with rounded densities `d_round` so that content `n`
/// has exactly `d_round[n] * K` replicas and no node stores more than `M`.
///
/// Contents are processed from the densest down. A content of density
/// `4^-i` picks one cell of the aligned `2^i x 2^i` subgrid, scanning
/// diagonals `((j + t) mod 2^i, j)` for `t = 0, 1, ...`, and is then tiled
/// over the whole torus. A cell is eligible only while its load is below
/// the current maximum load, unless all loads are equal.
pub fn canonical_placement(d_round: &[f64], spec: &GridSpec) -> Result<PlacementGrid> {
    let nu = log4_exact(spec.k)
        .ok_or_else(|| Error::InvalidInput(format!("node count {} is not a power of 4", spec.k)))?;
    let side = 1usize << nu;
    if d_round.len() != spec.n_catalog {
        return invalid("density vector length differs from catalog size");
    }
    let mut levels = Vec::with_capacity(d_round.len());
    for &x in d_round {
        let i = (0..=nu).find(|&i| (x - 0.25f64.powi(i as i32)).abs() <= 1e-12 * x);
        match i {
            Some(i) => levels.push(i as usize),
            None => return invalid(format!("density {x} is not a power of 1/4 above 1/K")),
        }
    }
    let total: f64 = d_round.iter().sum();
    if total > spec.m_cache as f64 + 1e-9 {
        return invalid(format!(
            "rounded densities sum to {total}, above cache size {}",
            spec.m_cache
        ));
    }

    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_by_key(|&n| (levels[n], n));

    let mut nodes = vec![Vec::new(); side * side];
    let mut max_load = 0usize;
    let mut uniform = true;
    for n in order {
        let g = 1usize << levels[n];
        let load = |r: usize, c: usize| nodes[r * side + c].len();
        let mut chosen = None;
        'scan: for t in 0..g {
            for j in 0..g {
                let (r, c) = ((j + t) % g, j);
                if uniform || load(r, c) < max_load {
                    chosen = Some((r, c));
                    break 'scan;
                }
            }
        }
        let (a, b) = chosen.ok_or_else(|| {
            Error::NotConverged(format!("no eligible cell for content {n}"))
        })?;
        for r in (a..side).step_by(g) {
            for c in (b..side).step_by(g) {
                let cell = &mut nodes[r * side + c];
                cell.push(n);
                if cell.len() > spec.m_cache {
                    return Err(Error::NotConverged(format!(
                        "node ({r}, {c}) exceeds cache size {}",
                        spec.m_cache
                    )));
                }
            }
        }
        max_load = nodes.iter().map(Vec::len).max().unwrap_or(0);
        uniform = nodes.iter().all(|v| v.len() == max_load);
    }
    Ok(PlacementGrid { side, nodes })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LinkLoad {
    pub max_load: f64,
    /// Mean over the `2K` torus links.
    pub avg_load: f64,
    /// Mean hop count per request.
    pub avg_hops: f64,
}

fn torus_delta(from: usize, to: usize, side: usize) -> (usize, bool) {
    let fwd = (to + side - from) % side;
    let back = side - fwd;
    if fwd == 0 {
        (0, true)
    } else if fwd <= back {
        (fwd, true)
    } else {
        (back, false)
    }
}

/// Every node requests content `n` at rate `p_n` and fetches it from the
/// nearest replica (toroidal Manhattan distance, ties to the smallest
/// `(row, col)`), moving along its row first and then along the column.
/// A half-way wrap goes in the increasing direction.
pub fn evaluate_link_load(pl: &PlacementGrid, spec: &GridSpec) -> Result<LinkLoad> {
    let side = pl.side;
    let k = side * side;
    if k as u64 != spec.k || pl.nodes.len() != k {
        return invalid("placement size differs from the grid spec");
    }
    let p = spec.pop.probs();
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); spec.n_catalog];
    for (v, items) in pl.nodes.iter().enumerate() {
        for &c in items {
            if c >= spec.n_catalog {
                return invalid(format!("content {c} outside the catalog"));
            }
            holders[c].push(v);
        }
    }
    // links[2v] goes right from v, links[2v + 1] goes down from v.
    let mut links = vec![0.0f64; 2 * k];
    let mut hops = Kahan::default();
    for (n, h) in holders.iter().enumerate() {
        if h.is_empty() {
            return invalid(format!("content {} is not placed", n + 1));
        }
        if p[n] == 0.0 {
            continue;
        }
        for src in 0..k {
            let (sr, sc) = (src / side, src % side);
            let mut best = (usize::MAX, 0);
            for &dst in h {
                let (dr, dc) = (dst / side, dst % side);
                let dist = torus_delta(sc, dc, side).0 + torus_delta(sr, dr, side).0;
                if dist < best.0 {
                    best = (dist, dst);
                }
            }
            let dst = best.1;
            hops.add(p[n] * best.0 as f64);
            let (dr, dc) = (dst / side, dst % side);
            let (mut r, mut c) = (sr, sc);
            let (steps, fwd) = torus_delta(sc, dc, side);
            for _ in 0..steps {
                if fwd {
                    links[2 * (r * side + c)] += p[n];
                    c = (c + 1) % side;
                } else {
                    c = (c + side - 1) % side;
                    links[2 * (r * side + c)] += p[n];
                }
            }
            let (steps, fwd) = torus_delta(sr, dr, side);
            for _ in 0..steps {
                if fwd {
                    links[2 * (r * side + c) + 1] += p[n];
                    r = (r + 1) % side;
                } else {
                    r = (r + side - 1) % side;
                    links[2 * (r * side + c) + 1] += p[n];
                }
            }
        }
    }
    let max_load = links.iter().copied().fold(0.0, f64::max);
    let avg_load = links.iter().sum::<f64>() / links.len() as f64;
    Ok(LinkLoad {
        max_load,
        avg_load,
        avg_hops: hops.value() / k as f64,
    })
}

/// How the grid grows in a scaling experiment. The size list holds the
/// driver variable: the catalog `N` for `KFirst`, `HighM` and `LowM`, the
/// node count `K` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Regime {
    /// `K` grows first, then `N`: each `N` is solved with `K >= 64 N^2`.
    KFirst { m: usize },
    /// `N = M K / 2`, so `MK - N` grows with `K`.
    Proportional { m: usize },
    /// `N = M K - 1`.
    Saturated { m: usize },
    /// Fixed `K`, cache growing as `M = 2 ceil(N / K)`.
    HighM { k: u64 },
    /// Fixed `K`, cache `M = ceil(N / K) + 1`.
    LowM { k: u64 },
}

impl Regime {
    /// Power-law exponent of `C` in the driver variable, where one is known.
    pub fn expected_slope(&self, tau: f64) -> Option<f64> {
        match self {
            Regime::KFirst { .. } => {
                if tau < 1.0 {
                    Some(0.5)
                } else if tau > 1.0 && tau < 1.5 {
                    Some(1.5 - tau)
                } else if tau > 1.5 {
                    Some(0.0)
                } else {
                    None
                }
            }
            Regime::Proportional { .. } => {
                if tau < 1.0 {
                    Some(0.5)
                } else if tau > 1.0 && tau < 1.5 {
                    Some(1.5 - tau)
                } else if tau > 1.5 {
                    Some(0.5 - 1.5 * (tau - 1.0) / tau)
                } else {
                    None
                }
            }
            Regime::Saturated { .. } => Some(0.5),
            Regime::HighM { .. } | Regime::LowM { .. } => None,
        }
    }

    fn instance(&self, size: u64) -> Result<(u64, usize, usize)> {
        let ceil_div = |a: u64, b: u64| a.div_ceil(b) as usize;
        Ok(match *self {
            Regime::KFirst { m } => {
                let target = 64u128 * (size as u128) * (size as u128);
                let mut k: u128 = 1;
                while k < target {
                    k *= 4;
                }
                if k > u64::MAX as u128 {
                    return invalid(format!("catalog {size} too large for this regime"));
                }
                (k as u64, size as usize, m)
            }
            Regime::Proportional { m } => (size, (m as u64 * size / 2) as usize, m),
            Regime::Saturated { m } => (size, (m as u64 * size - 1) as usize, m),
            Regime::HighM { k } => (k, size as usize, 2 * ceil_div(size, k)),
            Regime::LowM { k } => (k, size as usize, ceil_div(size, k) + 1),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub k: u64,
    pub n: usize,
    pub m: usize,
    pub c: f64,
    pub l: usize,
    pub r: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingTable {
    pub regime: Regime,
    pub tau: f64,
    pub rows: Vec<ScalingRow>,
    pub slope: f64,
    pub r_squared: f64,
    pub expected_slope: Option<f64>,
}

/// Ordinary least squares of `y` on `x`: `(slope, intercept, R^2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

/// Solves the density program across `sizes` and fits `log C` against the
/// log of the driver variable.
pub fn scaling_experiment(regime: Regime, tau: f64, sizes: &[u64]) -> Result<ScalingTable> {
    if sizes.len() < 3 {
        return invalid("scaling experiment needs at least 3 sizes");
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let (k, n, m) = regime.instance(size)?;
        let pop = PowerLaw::new(tau, n as u64)?.to_popularity();
        let spec = GridSpec::new(k, m, pop)?;
        let sol = solve_density(&spec)?;
        rows.push(ScalingRow {
            k,
            n,
            m,
            c: sol.cost,
            l: sol.l,
            r: sol.r,
        });
    }
    let x: Vec<f64> = sizes.iter().map(|&s| (s as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.c.ln()).collect();
    let (slope, _, r_squared) = linear_fit(&x, &y);
    Ok(ScalingTable {
        regime,
        tau,
        rows,
        slope,
        r_squared,
        expected_slope: regime.expected_slope(tau),
    })
}
