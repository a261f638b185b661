//! Online caching with regret guarantees: online gradient ascent over the
//! capped simplex, its fast projection, the best static configuration in
//! hindsight, and regret lower bounds.

use std::cmp::Reverse;
use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::traces::Trace;

/// Diameter of `{0 <= y <= 1, sum y <= m}` in `n` dimensions: two
/// vertices differ in at most `min(2m, n)` coordinates.
pub fn diameter(m: usize, n: usize) -> f64 {
    ((2 * m).min(n) as f64).sqrt()
}

fn check_vector(z: &[f64]) -> Result<()> {
    if z.iter().any(|x| !x.is_finite()) {
        return invalid("vector entries must be finite");
    }
    Ok(())
}

/// Clamp onto the box, if that already satisfies the budget.
fn feasible_clamp(z: &[f64], m: usize) -> Option<Vec<f64>> {
    let y: Vec<f64> = z.iter().map(|x| x.clamp(0.0, 1.0)).collect();
    (y.iter().sum::<f64>() <= m as f64).then_some(y)
}

/// Water-filling on a vector sorted in decreasing order, in which at most
/// the first entry exceeds 1 and the box clamp violates the budget. The
/// active set `M2` is always a contiguous range, so `rho` follows from
/// prefix sums.
fn project_sorted(zs: &[f64], m: usize, out: &mut [f64]) {
    let n = zs.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &z in zs {
        prefix.push(prefix.last().unwrap() + z);
    }
    let mf = m as f64;
    // Returns (half rho, end of M2) for M2 = [start, end).
    let fill = |start: usize| -> (f64, usize) {
        let ones = start as f64;
        let mut end = n;
        loop {
            let half_rho = (ones - mf + prefix[end] - prefix[start]) / (end - start) as f64;
            let mut new_end = end;
            while new_end > start + 1 && zs[new_end - 1] - half_rho < 0.0 {
                new_end -= 1;
            }
            if new_end == end {
                return (half_rho, end);
            }
            end = new_end;
        }
    };
    let (mut half_rho, mut end) = fill(0);
    let mut start = 0;
    if zs[0] - half_rho > 1.0 {
        start = 1;
        (half_rho, end) = fill(1);
    }
    for (i, y) in out.iter_mut().enumerate() {
        *y = if i < start {
            1.0
        } else if i < end {
            (zs[i] - half_rho).clamp(0.0, 1.0)
        } else {
            0.0
        };
    }
}

/// Euclidean projection onto `{0 <= y <= 1, sum y <= m}` for inputs with at
/// most one entry above 1, as produced by a gradient step from a feasible
/// point with a one-hot gradient. Runs in `O(N log N)`.
pub fn project_capped_simplex(z: &[f64], m: usize) -> Result<Vec<f64>> {
    check_vector(z)?;
    if m == 0 {
        return invalid("cache size must be at least 1");
    }
    if z.iter().filter(|&&x| x > 1.0).count() > 1 {
        return invalid("more than one entry exceeds 1");
    }
    if let Some(y) = feasible_clamp(z, m) {
        return Ok(y);
    }
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.sort_by(|&a, &b| z[b].total_cmp(&z[a]));
    let zs: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
    let mut ys = vec![0.0; z.len()];
    project_sorted(&zs, m, &mut ys);
    let mut y = vec![0.0; z.len()];
    for (k, &i) in idx.iter().enumerate() {
        y[i] = ys[k];
    }
    Ok(y)
}

/// Projection for arbitrary inputs: `y = clamp(z - theta, 0, 1)` with the
/// threshold located exactly among the sorted breakpoints.
pub fn project_capped_simplex_general(z: &[f64], m: usize) -> Result<Vec<f64>> {
    check_vector(z)?;
    if let Some(y) = feasible_clamp(z, m) {
        return Ok(y);
    }
    let mf = m as f64;
    let total = |theta: f64| z.iter().map(|x| (x - theta).clamp(0.0, 1.0)).sum::<f64>();
    let mut bp: Vec<f64> = z.iter().flat_map(|&x| [x, x - 1.0]).filter(|&b| b >= 0.0).collect();
    bp.push(0.0);
    bp.sort_by(f64::total_cmp);
    bp.dedup();
    // total() is nonincreasing in theta, exceeds m at 0 and is 0 beyond max z.
    let k = bp.partition_point(|&b| total(b) > mf);
    let (lo, hi) = (bp[k - 1], bp[k]);
    let (slo, shi) = (total(lo), total(hi));
    let theta = if slo == shi { lo } else { lo + (slo - mf) * (hi - lo) / (slo - shi) };
    Ok(z.iter().map(|x| (x - theta).clamp(0.0, 1.0)).collect())
}

/// Uses the fast path when its precondition holds and the general method
/// otherwise.
pub fn project(z: &[f64], m: usize) -> Result<Vec<f64>> {
    if z.iter().filter(|&&x| x > 1.0).count() > 1 {
        project_capped_simplex_general(z, m)
    } else {
        project_capped_simplex(z, m)
    }
}

/// One OGA step: `project(y + eta * w_n * e_n)` for a request of content
/// `n` (1-based).
pub fn oga_step(y: &[f64], request: usize, w: &[f64], eta: f64, m: usize) -> Result<Vec<f64>> {
    if request == 0 || request > y.len() || w.len() != y.len() {
        return invalid("request or weights do not match the configuration");
    }
    let mut z = y.to_vec();
    z[request - 1] += eta * w[request - 1];
    project(&z, m)
}

/// OGA state that keeps the contents sorted by `y`, so a step costs `O(N)`.
#[derive(Debug, Clone)]
pub struct Oga {
    y: Vec<f64>,
    order: Vec<usize>,
    m: usize,
    zs: Vec<f64>,
    ys: Vec<f64>,
}

impl Oga {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return invalid("need a nonempty catalog and a positive cache size");
        }
        Ok(Self {
            y: vec![0.0; n],
            order: (0..n).collect(),
            m,
            zs: vec![0.0; n],
            ys: vec![0.0; n],
        })
    }

    /// Starts from the feasible configuration `y`.
    pub fn from_config(y: Vec<f64>, m: usize) -> Result<Self> {
        let mut oga = Self::new(y.len(), m)?;
        if y.iter().any(|v| !(0.0..=1.0).contains(v)) || y.iter().sum::<f64>() > m as f64 + 1e-9 {
            return invalid("initial configuration is not in the capped simplex");
        }
        oga.order.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
        oga.y = y;
        Ok(oga)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Adds `delta` to content `idx` (0-based) and projects.
    pub fn step(&mut self, idx: usize, delta: f64) {
        if delta == 0.0 {
            return;
        }
        self.y[idx] += delta;
        let k = self.order.iter().position(|&i| i == idx).expect("index present");
        let y = &self.y;
        let to = self.order[..k].partition_point(|&j| y[j] >= y[idx]);
        self.order[to..=k].rotate_right(1);

        let over = self.y[idx] > 1.0;
        let sum: f64 = self.y.iter().map(|v| v.clamp(0.0, 1.0)).sum();
        if sum <= self.m as f64 {
            if over {
                self.y[idx] = 1.0;
            }
            return;
        }
        for (k, &i) in self.order.iter().enumerate() {
            self.zs[k] = self.y[i];
        }
        project_sorted(&self.zs, self.m, &mut self.ys);
        for (k, &i) in self.order.iter().enumerate() {
            self.y[i] = self.ys[k];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StepSize {
    Fixed(f64),
    /// `diam / (max w * sqrt(T))` for the known horizon `T`.
    HorizonOptimal,
    /// `1 / sqrt(t)`.
    InvSqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretTrace {
    /// Utility collected by the policy in each slot.
    pub utility: Vec<f64>,
    /// Best static utility over the first `t` slots.
    pub hindsight_cum: Vec<f64>,
    /// `hindsight_cum[t] - (policy utility over the first t slots)`.
    pub regret: Vec<f64>,
    pub total_utility: f64,
    pub hindsight_utility: f64,
    pub final_regret: f64,
}

fn check_weights(w: &[f64]) -> Result<()> {
    if w.is_empty() || w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return invalid("utility weights must be positive and finite");
    }
    Ok(())
}

fn check_ids(ids: &[usize], n: usize) -> Result<()> {
    if let Some(&bad) = ids.iter().find(|&&c| c == 0 || c > n) {
        return invalid(format!("content {bad} outside catalog 1..={n}"));
    }
    Ok(())
}

/// Tracks the sum of the `m` largest values under increments.
struct TopM {
    m: usize,
    value: Vec<f64>,
    top: BTreeSet<(u64, Reverse<usize>)>,
    rest: BTreeSet<(u64, Reverse<usize>)>,
    sum: f64,
}

impl TopM {
    fn new(n: usize, m: usize) -> Self {
        let mut s = Self {
            m: m.min(n),
            value: vec![0.0; n],
            top: BTreeSet::new(),
            rest: BTreeSet::new(),
            sum: 0.0,
        };
        for i in 0..n {
            if i < s.m {
                s.top.insert((0, Reverse(i)));
            } else {
                s.rest.insert((0, Reverse(i)));
            }
        }
        s
    }

    fn add(&mut self, i: usize, delta: f64) {
        let old = (self.value[i].to_bits(), Reverse(i));
        self.value[i] += delta;
        let new = (self.value[i].to_bits(), Reverse(i));
        if self.top.remove(&old) {
            self.top.insert(new);
            self.sum += delta;
            return;
        }
        self.rest.remove(&old);
        self.rest.insert(new);
        if let (Some(&lo), Some(&hi)) = (self.top.first(), self.rest.last()) {
            if hi > lo {
                self.top.remove(&lo);
                self.rest.remove(&hi);
                self.top.insert(hi);
                self.rest.insert(lo);
                self.sum += f64::from_bits(hi.0) - f64::from_bits(lo.0);
            }
        }
    }
}

/// Best fixed integral configuration for a request sequence: cache the `m`
/// contents with the largest `w_n * count_n` (ties to the smaller id).
pub fn best_static_hindsight(ids: &[usize], w: &[f64], m: usize) -> Result<(Vec<f64>, f64)> {
    check_weights(w)?;
    check_ids(ids, w.len())?;
    let mut score = vec![0.0; w.len()];
    for &c in ids {
        score[c - 1] += w[c - 1];
    }
    let mut y = vec![0.0; w.len()];
    let mut total = 0.0;
    for i in crate::popularity::top_m_by(&score, m.min(w.len())) {
        y[i] = 1.0;
        total += score[i];
    }
    Ok((y, total))
}

/// Starting configuration of OGA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum OgaInit {
    #[default]
    Empty,
    /// `y_n = min(M/N, 1)` for every content.
    Uniform,
}

/// Runs OGA from the empty cache over a request sequence of 1-based ids.
pub fn run_oga(ids: &[usize], w: &[f64], m: usize, step: StepSize) -> Result<RegretTrace> {
    run_oga_from(ids, w, m, step, OgaInit::Empty)
}

pub fn run_oga_from(
    ids: &[usize],
    w: &[f64],
    m: usize,
    step: StepSize,
    init: OgaInit,
) -> Result<RegretTrace> {
    check_weights(w)?;
    check_ids(ids, w.len())?;
    let n = w.len();
    let wmax = w.iter().cloned().fold(0.0, f64::max);
    let horizon = ids.len().max(1) as f64;
    let mut oga = match init {
        OgaInit::Empty => Oga::new(n, m)?,
        OgaInit::Uniform => Oga::from_config(vec![(m as f64 / n as f64).min(1.0); n], m)?,
    };
    let mut top = TopM::new(n, m);
    let mut utility = Vec::with_capacity(ids.len());
    let mut hindsight_cum = Vec::with_capacity(ids.len());
    let mut regret = Vec::with_capacity(ids.len());
    let mut cum = 0.0;
    for (t, &c) in ids.iter().enumerate() {
        let i = c - 1;
        let u = w[i] * oga.y()[i];
        cum += u;
        top.add(i, w[i]);
        utility.push(u);
        hindsight_cum.push(top.sum);
        regret.push(top.sum - cum);
        let eta = match step {
            StepSize::Fixed(e) => e,
            StepSize::HorizonOptimal => diameter(m, n) / (wmax * horizon.sqrt()),
            StepSize::InvSqrt => 1.0 / ((t + 1) as f64).sqrt(),
        };
        oga.step(i, eta * w[i]);
    }
    let hindsight_utility = top.sum;
    Ok(RegretTrace {
        utility,
        hindsight_cum,
        regret,
        total_utility: cum,
        hindsight_utility,
        final_regret: hindsight_utility - cum,
    })
}

/// The cyclic sequence `1, 2, ..., m+1, 1, 2, ...` of length `t`.
pub fn adversarial_periodic_trace(m: usize, t: usize) -> Result<Trace> {
    if t == 0 {
        return invalid("length must be at least 1");
    }
    let ids: Vec<usize> = (0..t).map(|i| i % (m + 1) + 1).collect();
    Trace::from_contents(&ids)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LowerBoundMode {
    /// Average of the top-`m` order statistics of the limiting Gaussian.
    MonteCarlo { samples: usize, seed: u64 },
    /// `w sqrt(gamma/pi) sqrt(m T)` for equal weights and `m < n/2`.
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBound {
    pub value: f64,
    /// Covariance eigenvalues below zero that were clipped.
    pub clipped_eigenvalues: usize,
}

/// Asymptotic regret lower bound for `t` slots, from the Gaussian limit of
/// the centered per-content utilities under the adversary that requests
/// content `n` with probability proportional to `1 / w_n`.
pub fn regret_lower_bound(w: &[f64], m: usize, t: usize, mode: LowerBoundMode) -> Result<LowerBound> {
    check_weights(w)?;
    let n = w.len();
    if m == 0 {
        return Ok(LowerBound {
            value: 0.0,
            clipped_eigenvalues: 0,
        });
    }
    if m > n {
        return invalid("cache larger than catalog");
    }
    let sqrt_t = (t as f64).sqrt();
    match mode {
        LowerBoundMode::ClosedForm => {
            if w.iter().any(|&x| x != w[0]) {
                return invalid("closed form needs equal weights");
            }
            if 2 * m >= n {
                return invalid("closed form needs m < n/2");
            }
            let gamma = m as f64 / n as f64;
            Ok(LowerBound {
                value: w[0] * (gamma / std::f64::consts::PI).sqrt() * (m as f64 * t as f64).sqrt(),
                clipped_eigenvalues: 0,
            })
        }
        LowerBoundMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return invalid("need at least one sample");
            }
            let s: f64 = w.iter().map(|x| 1.0 / x).sum();
            let cov = DMatrix::from_fn(n, n, |i, j| {
                let d = if i == j { w[i] } else { 0.0 };
                (d - 1.0 / s) / s
            });
            let eig = SymmetricEigen::new(cov);
            let mut clipped = 0;
            let roots: Vec<f64> = eig
                .eigenvalues
                .iter()
                .map(|&l| {
                    if l < 0.0 {
                        clipped += 1;
                        0.0
                    } else {
                        l.sqrt()
                    }
                })
                .collect();
            let factor = &eig.eigenvectors * DMatrix::from_diagonal(&DVector::from_vec(roots));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut acc = 0.0;
            let mut xi = DVector::<f64>::zeros(n);
            let mut z = DVector::<f64>::zeros(n);
            for _ in 0..samples {
                for v in xi.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                factor.mul_to(&xi, &mut z);
                let mut v: Vec<f64> = z.iter().copied().collect();
                v.sort_by(|a, b| b.total_cmp(a));
                acc += v[..m].iter().sum::<f64>();
            }
            Ok(LowerBound {
                value: acc / samples as f64 * sqrt_t,
                clipped_eigenvalues: clipped,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eviction::{simulate_ids, PolicyKind, SimConfig};
    use proptest::prelude::*;
    use rand::Rng;

    /// Exact projection by trying every ordered partition (ones, free,
    /// zeros) of the sorted input and keeping the KKT-consistent one.
    fn exact_qp(z: &[f64], m: usize) -> Vec<f64> {
        let n = z.len();
        let y: Vec<f64> = z.iter().map(|x| x.clamp(0.0, 1.0)).collect();
        if y.iter().sum::<f64>() <= m as f64 {
            return y;
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| z[b].total_cmp(&z[a]));
        let zs: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
        let tol = 1e-12;
        for a in 0..=n.min(m) {
            for b in a..=n {
                let free = b - a;
                let rest = m as f64 - a as f64;
                let half = if free == 0 {
                    if rest.abs() > tol {
                        continue;
                    }
                    // Any threshold in the admissible window works.
                    let lo = if b < n { zs[b].max(0.0) } else { 0.0 };
                    lo
                } else {
                    (zs[a..b].iter().sum::<f64>() - rest) / free as f64
                };
                if half < -tol {
                    continue;
                }
                let ok_ones = zs[..a].iter().all(|&v| v - half >= 1.0 - tol);
                let ok_free = zs[a..b].iter().all(|&v| v - half >= -tol && v - half <= 1.0 + tol);
                let ok_zero = zs[b..].iter().all(|&v| v - half <= tol);
                if ok_ones && ok_free && ok_zero {
                    let mut out = vec![0.0; n];
                    for (k, &i) in idx.iter().enumerate() {
                        out[i] = if k < a { 1.0 } else if k < b { zs[k] - half } else { 0.0 };
                    }
                    return out;
                }
            }
        }
        panic!("no KKT partition found for {z:?}");
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_capped_simplex(&[0.5, 0.3], 1).unwrap(), vec![0.5, 0.3]);
        assert_eq!(project_capped_simplex(&[2.0, 0.0, 0.0], 1).unwrap(), vec![1.0, 0.0, 0.0]);
        let y = project_capped_simplex(&[0.9, 0.9, 0.9], 1).unwrap();
        for v in &y {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        // rho / 2 = 0.9 - 1/3
        assert!((0.9 - y[0] - 0.5667).abs() < 1e-4);
        assert!(project_capped_simplex(&[1.5, 1.2, 0.0], 1).is_err());
        assert!(project(&[1.5, 1.2, 0.0], 1).is_ok());
        assert!(project_capped_simplex(&[0.5, f64::NAN], 1).is_err());
    }

    #[test]
    fn projection_with_overflowing_entry() {
        let z = [1.7, 0.8, 0.6, 0.1, -0.2];
        let y = project_capped_simplex(&z, 2).unwrap();
        assert!(dist(&y, &exact_qp(&z, 2)) < 1e-12);
        assert_eq!(y[0], 1.0);
    }

    #[test]
    fn grid_qp_agrees_on_small_case() {
        // Brute force on a 0.001 grid in two dimensions.
        let z = [1.3, 0.4];
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=1000 {
            for j in 0..=1000 {
                let (a, b) = (i as f64 / 1000.0, j as f64 / 1000.0);
                if a + b <= 1.0 + 1e-12 {
                    let d = (a - z[0]).powi(2) + (b - z[1]).powi(2);
                    if d < best.0 {
                        best = (d, a, b);
                    }
                }
            }
        }
        let y = project_capped_simplex(&z, 1).unwrap();
        assert!((y[0] - best.1).abs() <= 1e-3 && (y[1] - best.2).abs() <= 1e-3);
    }

    #[test]
    fn oga_step_examples() {
        let w = vec![1.0; 4];
        let y = vec![0.2, 0.3, 0.1, 0.0];
        assert_eq!(oga_step(&y, 2, &w, 0.0, 2).unwrap(), y);
        let y0 = vec![0.0; 4];
        assert_eq!(oga_step(&y0, 3, &w, 0.4, 2).unwrap(), vec![0.0, 0.0, 0.4, 0.0]);
        let full = vec![1.0, 0.5, 0.5, 0.0];
        let y1 = oga_step(&full, 1, &w, 0.3, 2).unwrap();
        assert!((y1.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert_eq!(y1[0], 1.0);
        assert!((y1[1] - 0.5).abs() < 1e-12);
        assert!(oga_step(&y0, 5, &w, 0.1, 2).is_err());
    }

    #[test]
    fn incremental_oga_matches_direct_steps() {
        let n = 30;
        let w: Vec<f64> = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut oga = Oga::new(n, 5).unwrap();
        let mut y = vec![0.0; n];
        for _ in 0..500 {
            let r = rng.random_range(1..=n);
            y = oga_step(&y, r, &w, 0.2, 5).unwrap();
            oga.step(r - 1, 0.2 * w[r - 1]);
            assert!(dist(&y, oga.y()) < 1e-9);
        }
    }

    #[test]
    fn uniform_start_matches_direct_steps() {
        let (n, m) = (40, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ids: Vec<usize> = (0..400).map(|_| rng.random_range(1..=n)).collect();
        let w = vec![1.0; n];
        let r = run_oga_from(&ids, &w, m, StepSize::Fixed(0.1), OgaInit::Uniform).unwrap();
        let mut y = vec![m as f64 / n as f64; n];
        let mut total = 0.0;
        for &c in &ids {
            total += y[c - 1];
            y = oga_step(&y, c, &w, 0.1, m).unwrap();
        }
        assert!((r.total_utility - total).abs() < 1e-9);
        assert!(Oga::from_config(vec![0.9, 0.9], 1).is_err());
    }

    #[test]
    fn hindsight_examples() {
        let (y, u) = best_static_hindsight(&[3, 3, 3], &[1.0, 1.0, 2.0], 1).unwrap();
        assert_eq!(y, vec![0.0, 0.0, 1.0]);
        assert_eq!(u, 6.0);
        let ids = [1, 2, 3, 2, 1, 1];
        let w = [1.0, 2.0, 0.5];
        let (_, u) = best_static_hindsight(&ids, &w, 3).unwrap();
        assert_eq!(u, ids.iter().map(|&i| w[i - 1]).sum::<f64>());
    }

    #[test]
    fn hindsight_matches_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let ids: Vec<usize> = (0..40).map(|_| rng.random_range(1..=5)).collect();
            let w: Vec<f64> = (0..5).map(|_| rng.random_range(0.5..2.0)).collect();
            let (_, u) = best_static_hindsight(&ids, &w, 2).unwrap();
            let mut best = 0.0f64;
            for a in 0..5 {
                for b in a + 1..5 {
                    let s: f64 = ids.iter().filter(|&&c| c - 1 == a || c - 1 == b).map(|&c| w[c - 1]).sum();
                    best = best.max(s);
                }
            }
            assert!((u - best).abs() < 1e-9);
        }
    }

    #[test]
    fn periodic_trace_examples() {
        assert_eq!(adversarial_periodic_trace(2, 7).unwrap().contents(), vec![1, 2, 3, 1, 2, 3, 1]);
        assert_eq!(adversarial_periodic_trace(1, 4).unwrap().contents(), vec![1, 2, 1, 2]);
        let ids = adversarial_periodic_trace(4, 1000).unwrap().contents();
        let (_, u) = best_static_hindsight(&ids, &[1.0; 5], 4).unwrap();
        assert!(u >= 1000.0 * 4.0 / 5.0);
    }

    #[test]
    fn oga_on_constant_requests() {
        let ids = vec![1; 10_000];
        let r = run_oga(&ids, &[1.0, 1.0, 1.0], 1, StepSize::Fixed(0.1)).unwrap();
        assert!(r.total_utility / 10_000.0 > 0.99);
        assert!(r.final_regret < 20.0);
    }

    #[test]
    fn oga_beats_lru_on_adversarial_trace() {
        let (m, t) = (4, 10_000);
        let ids = adversarial_periodic_trace(m, t).unwrap().contents();
        let w = vec![1.0; m + 1];
        let r = run_oga(&ids, &w, m, StepSize::HorizonOptimal).unwrap();
        assert!(r.final_regret <= (2.0 * (m * t) as f64).sqrt());
        let lru = simulate_ids(&SimConfig::new(PolicyKind::Lru, m), &ids).unwrap();
        let lru_regret = r.hindsight_utility - lru.hits as f64;
        assert!(lru_regret >= m as f64 * (t as f64 / (m + 1) as f64 - 1.0));
    }

    #[test]
    fn telescoping_bound_holds() {
        let n = 50;
        let m = 10;
        let w = vec![1.0; n];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ids: Vec<usize> = (0..5000).map(|_| rng.random_range(1..=n)).collect();
        for eta in [0.01, 0.1, 1.0] {
            let r = run_oga(&ids, &w, m, StepSize::Fixed(eta)).unwrap();
            let d = diameter(m, n);
            let bound = d * d / (2.0 * eta) + eta * ids.len() as f64 / 2.0;
            assert!(r.final_regret <= bound, "eta={eta}");
        }
    }

    #[test]
    fn lower_bound_examples() {
        let w = vec![1.0; 500];
        let lb = regret_lower_bound(&w, 100, 10_000, LowerBoundMode::ClosedForm).unwrap();
        assert!((lb.value - 252.3).abs() < 0.1);
        assert_eq!(regret_lower_bound(&w, 0, 100, LowerBoundMode::ClosedForm).unwrap().value, 0.0);
        assert!(regret_lower_bound(&w, 300, 100, LowerBoundMode::ClosedForm).is_err());
    }

    #[test]
    fn monte_carlo_exceeds_closed_form() {
        let w = vec![1.0; 20];
        let mc = regret_lower_bound(&w, 5, 10_000, LowerBoundMode::MonteCarlo { samples: 100_000, seed: 1 }).unwrap();
        let cf = regret_lower_bound(&w, 5, 10_000, LowerBoundMode::ClosedForm).unwrap();
        assert!(mc.value >= cf.value, "mc {} cf {}", mc.value, cf.value);
    }

    #[test]
    fn diameter_cases() {
        assert_eq!(diameter(4, 10), 8f64.sqrt());
        assert_eq!(diameter(7, 10), 10f64.sqrt());
        assert_eq!(diameter(10, 10), 10f64.sqrt());
        assert_eq!(diameter(0, 10), 0.0);
    }

    proptest! {
        #[test]
        fn projection_matches_exact_qp(
            base in prop::collection::vec(-0.5f64..1.0, 1..50),
            bump in 0.0f64..2.0,
            pick in 0usize..50,
            m in 1usize..10,
        ) {
            let mut z = base.clone();
            let k = pick % z.len();
            z[k] += bump;
            let y = project_capped_simplex(&z, m).unwrap();
            prop_assert!(dist(&y, &exact_qp(&z, m)) <= 1e-8);
            prop_assert!(y.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!(y.iter().sum::<f64>() <= m as f64 + 1e-12);
        }

        #[test]
        fn general_projection_matches_exact_qp(
            z in prop::collection::vec(-1.0f64..3.0, 1..40),
            m in 1usize..10,
        ) {
            let y = project_capped_simplex_general(&z, m).unwrap();
            prop_assert!(dist(&y, &exact_qp(&z, m)) <= 1e-8);
        }

        #[test]
        fn oga_regret_below_theorem_bound(seed in 0u64..50, m in 1usize..6) {
            let n = 12;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ids: Vec<usize> = (0..2000).map(|_| rng.random_range(1..=n)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
            let r = run_oga(&ids, &w, m, StepSize::HorizonOptimal).unwrap();
            let wmax = w.iter().cloned().fold(0.0, f64::max);
            prop_assert!(r.final_regret <= diameter(m, n) * wmax * (ids.len() as f64).sqrt());
            prop_assert!((r.regret.last().unwrap() - r.final_regret).abs() < 1e-9);
        }
    }
}
