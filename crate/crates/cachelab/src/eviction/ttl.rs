use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::Serialize;

use super::engine::SimReport;
use crate::error::{invalid, Error, Result};
use crate::popularity::PopularityVector;
use crate::traces::Trace;

/// Whether a hit restarts the content's timer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TtlModel {
    Reset,
    NonReset,
}

/// Stationary hit probability of a TTL cache for one content requested at
/// Poisson rate `rate` with timer `timer`.
pub fn ttl_hit_prob(model: TtlModel, rate: f64, timer: f64) -> f64 {
    let x = rate * timer;
    if x.is_infinite() {
        return 1.0;
    }
    match model {
        TtlModel::NonReset => x / (1.0 + x),
        TtlModel::Reset => -(-x).exp_m1(),
    }
}

/// Per-content timers; entry `i` belongs to content `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtlConfig {
    pub timers: Vec<f64>,
    pub model: TtlModel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtlReport {
    pub report: SimReport,
    /// Number of live contents right after each request.
    pub occupancy: Vec<usize>,
    /// Occupancy averaged over time between the first and last request.
    pub mean_occupancy: f64,
    pub max_occupancy: usize,
    /// Fraction of requests after which occupancy exceeded the soft limit.
    pub overflow_fraction: f64,
}

/// Event-driven TTL cache. A request hits while its content's timer has not
/// expired. The occupancy limit `m_soft` is only monitored.
pub fn ttl_simulate(cfg: &TtlConfig, trace: &Trace, m_soft: usize) -> Result<TtlReport> {
    if cfg.timers.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return invalid("timers must be finite and nonnegative");
    }
    let n = cfg.timers.len();
    if trace.requests.iter().any(|r| r.content > n) {
        return invalid("trace requests a content without a timer");
    }
    let mut expiry = vec![f64::NEG_INFINITY; n + 1];
    let mut start = vec![0.0f64; n + 1];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    let mut live = 0usize;
    let mut series = Vec::with_capacity(trace.len());
    let mut occupancy = Vec::with_capacity(trace.len());
    let mut busy = 0.0;
    let t0 = trace.requests.first().map_or(0.0, |r| r.time);
    let t_end = trace.requests.last().map_or(0.0, |r| r.time);

    for r in &trace.requests {
        let t = r.time;
        while let Some(&Reverse((bits, id))) = heap.peek() {
            let e = f64::from_bits(bits);
            if e > t {
                break;
            }
            heap.pop();
            if expiry[id] == e {
                live -= 1;
                busy += e - start[id].max(t0);
                expiry[id] = f64::NEG_INFINITY;
            }
        }
        let id = r.content;
        let timer = cfg.timers[id - 1];
        let hit = t < expiry[id];
        if hit {
            if cfg.model == TtlModel::Reset {
                expiry[id] = t + timer;
                heap.push(Reverse((expiry[id].to_bits(), id)));
            }
        } else if timer > 0.0 {
            expiry[id] = t + timer;
            start[id] = t;
            live += 1;
            heap.push(Reverse((expiry[id].to_bits(), id)));
        }
        series.push(hit);
        occupancy.push(live);
    }
    for id in 1..=n {
        if expiry[id] > f64::NEG_INFINITY {
            busy += expiry[id].min(t_end) - start[id].max(t0);
        }
    }
    let span = t_end - t0;
    let max_occupancy = occupancy.iter().copied().max().unwrap_or(0);
    let over = occupancy.iter().filter(|&&o| o > m_soft).count();
    Ok(TtlReport {
        report: SimReport::from_series(series, false),
        mean_occupancy: if span > 0.0 { busy / span } else { 0.0 },
        max_occupancy,
        overflow_fraction: if occupancy.is_empty() {
            0.0
        } else {
            over as f64 / occupancy.len() as f64
        },
        occupancy,
    })
}

/// Step size schedule for the dual variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StepRule {
    /// `eta0 / sqrt(t)`.
    Diminishing(f64),
    Fixed(f64),
    /// Starts at the given value and grows by 20% per step until the
    /// constraint residual first changes sign; afterwards it halves at every
    /// sign change and stays put otherwise.
    Adaptive(f64),
}

/// Weights `w_n` of the alpha-fair utilities `w_n h^(1-alpha) / (1-alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum CumWeights {
    /// Every content weighs 1.
    #[default]
    Uniform,
    /// Content `n` weighs `p_n`.
    Popularity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumConfig {
    pub alpha: f64,
    pub model: TtlModel,
    pub steps: usize,
    pub rule: StepRule,
    pub weights: CumWeights,
    /// Stop once `|sum h - M|` falls below this.
    pub tol: f64,
}

impl CumConfig {
    pub fn new(alpha: f64, model: TtlModel) -> Self {
        Self {
            alpha,
            model,
            steps: 100_000,
            rule: StepRule::Diminishing(0.1),
            weights: CumWeights::Uniform,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumSolution {
    pub ttl: TtlConfig,
    pub hit_probs: Vec<f64>,
    pub mu: f64,
    pub iterations: usize,
    /// `sum h - M` at the returned multiplier.
    pub residual: f64,
    pub converged: bool,
}

const H_MAX: f64 = 1.0 - 1e-12;
const MU_LIMIT: f64 = 1e9;

/// Timer that yields hit probability `h` at request rate `rate`.
fn timer_for(model: TtlModel, rate: f64, h: f64) -> f64 {
    if h <= 0.0 || rate <= 0.0 {
        return 0.0;
    }
    match model {
        TtlModel::Reset => -(-h).ln_1p() / rate,
        TtlModel::NonReset => h / (rate * (1.0 - h)),
    }
}

/// Dual subgradient method for the cache utility maximization problem with
/// alpha-fair utilities: timers follow from the hit probabilities
/// `h_n = (w_n / mu)^(1/alpha)`, and `mu` moves along the violation of
/// `sum h_n = M`.
pub fn ttl_cum_solve(pop: &PopularityVector, lambda: f64, m: usize, cfg: &CumConfig) -> Result<CumSolution> {
    if !(cfg.alpha > 0.0 && cfg.alpha.is_finite()) || (cfg.alpha - 1.0).abs() < 1e-12 {
        return invalid(format!("alpha must be positive and different from 1, got {}", cfg.alpha));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return invalid("rate must be positive");
    }
    let p = pop.probs();
    let support = p.iter().filter(|&&x| x > 0.0).count();
    if m == 0 || m >= support {
        return invalid(format!("need 0 < M < {support} (requested contents), got {m}"));
    }
    let w: Vec<f64> = match cfg.weights {
        CumWeights::Uniform => vec![1.0; p.len()],
        CumWeights::Popularity => p.to_vec(),
    };
    let inv_alpha = 1.0 / cfg.alpha;
    let target = m as f64;
    let hits = |mu: f64| -> Vec<f64> {
        p.iter()
            .zip(&w)
            .map(|(&pn, &wn)| {
                if pn <= 0.0 {
                    0.0
                } else if mu <= 0.0 {
                    H_MAX
                } else {
                    (wn / mu).powf(inv_alpha).min(H_MAX)
                }
            })
            .collect()
    };

    let mut mu = 1.0;
    let mut eta = match cfg.rule {
        StepRule::Diminishing(e) | StepRule::Fixed(e) | StepRule::Adaptive(e) => e,
    };
    if !(eta > 0.0) {
        return invalid("step size must be positive");
    }
    let mut prev_res: Option<f64> = None;
    let mut bracketed = false;
    let mut h = hits(mu);
    let mut res = h.iter().sum::<f64>() - target;
    let mut it = 0;
    while it < cfg.steps && res.abs() >= cfg.tol {
        it += 1;
        let step = match cfg.rule {
            StepRule::Diminishing(e) => e / (it as f64).sqrt(),
            StepRule::Fixed(e) => e,
            StepRule::Adaptive(_) => {
                if let Some(pr) = prev_res {
                    if pr.signum() != res.signum() {
                        bracketed = true;
                        eta *= 0.5;
                    } else if !bracketed {
                        eta *= 1.2;
                    }
                }
                eta
            }
        };
        prev_res = Some(res);
        mu = (mu + step * res).max(0.0);
        if !mu.is_finite() || mu.abs() > MU_LIMIT {
            return Err(Error::NotConverged(format!("dual variable diverged to {mu}")));
        }
        h = hits(mu);
        res = h.iter().sum::<f64>() - target;
    }
    let timers = p
        .iter()
        .zip(&h)
        .map(|(&pn, &hn)| timer_for(cfg.model, lambda * pn, hn))
        .collect();
    Ok(CumSolution {
        ttl: TtlConfig {
            timers,
            model: cfg.model,
        },
        hit_probs: h,
        mu,
        iterations: it,
        residual: res,
        converged: res.abs() < cfg.tol,
    })
}
