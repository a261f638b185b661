use crate::error::{invalid, Result};
use crate::popularity::{Kahan, PopularityVector};

fn expected_distinct(pop: &PopularityVector, lambda: f64, t: f64) -> f64 {
    let mut acc = Kahan::default();
    for &p in pop.probs() {
        acc.add(-(-lambda * p * t).exp_m1());
    }
    acc.value()
}

/// Characteristic time `t` of an LRU cache of size `m` fed by Poisson
/// requests of total rate `lambda`: the root of
/// `m = sum_n (1 - exp(-lambda p_n t))`.
pub fn che_characteristic_time(pop: &PopularityVector, lambda: f64, m: usize) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return invalid("rate must be positive");
    }
    let support = pop.probs().iter().filter(|&&p| p > 0.0).count();
    if m >= support {
        return invalid(format!(
            "cache size {m} must be below the number of requested contents {support}"
        ));
    }
    if m == 0 {
        return Ok(0.0);
    }
    let target = m as f64;
    let mut hi = 1.0 / lambda;
    while expected_distinct(pop, lambda, hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if expected_distinct(pop, lambda, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Che's approximation of the LRU hit probability.
pub fn lru_hit_prob_che(pop: &PopularityVector, lambda: f64, m: usize) -> Result<f64> {
    let t = che_characteristic_time(pop, lambda, m)?;
    let mut acc = Kahan::default();
    for &p in pop.probs() {
        acc.add(-p * (-lambda * p * t).exp_m1());
    }
    Ok(acc.value())
}

pub const KING_MAX_N: usize = 8;
pub const KING_MAX_M: usize = 4;

/// Exact stationary LRU hit probability, summing over every ordered
/// `m`-tuple of distinct contents (the recency order of the cache).
pub fn lru_exact_stationary(pop: &PopularityVector, m: usize) -> Result<f64> {
    let n = pop.len();
    if n > KING_MAX_N || m > KING_MAX_M {
        return invalid(format!(
            "exact LRU analysis limited to N <= {KING_MAX_N}, M <= {KING_MAX_M}; got N={n}, M={m}"
        ));
    }
    if m > n {
        return invalid(format!("cache size {m} exceeds catalog size {n}"));
    }
    let p = pop.probs();
    if m == 0 {
        return Ok(0.0);
    }
    if p.iter().filter(|&&x| x > 0.0).count() <= m {
        return Ok(1.0);
    }

    fn walk(p: &[f64], m: usize, used: &mut Vec<usize>, prob: f64, mass: f64, out: &mut f64) {
        if used.len() == m {
            *out += prob * mass;
            return;
        }
        for i in 0..p.len() {
            if p[i] == 0.0 || used.contains(&i) {
                continue;
            }
            used.push(i);
            walk(p, m, used, prob * p[i] / (1.0 - mass), mass + p[i], out);
            used.pop();
        }
    }

    let mut out = 0.0;
    walk(p, m, &mut Vec::with_capacity(m), 1.0, 0.0, &mut out);
    Ok(out)
}
