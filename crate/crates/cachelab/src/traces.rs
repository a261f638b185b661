//! Request traces: IRM, Poisson IRM, content replacement, rectangular shot-noise and
//! stochastic-block generators, CSV I/O, and the Bayesian popularity
//! classifier for shot-noise traffic.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedAliasIndex, Exp, Poisson};

use crate::error::{invalid, Error, Result};
use crate::popularity::{top_m_by, PopularityVector};

/// One request. Content ids are 1-based; location 0 denotes the aggregate
/// (parent) stream and users are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Request {
    pub time: f64,
    pub content: usize,
    pub location: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceMeta {
    pub generator: String,
    pub seed: Option<u64>,
    pub params: BTreeMap<String, String>,
}

impl TraceMeta {
    fn new(generator: &str, seed: u64) -> Self {
        Self {
            generator: generator.to_string(),
            seed: Some(seed),
            params: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub requests: Vec<Request>,
    pub meta: TraceMeta,
}

impl Trace {
    /// Builds a trace from requests, checking that time does not decrease.
    pub fn new(requests: Vec<Request>, meta: TraceMeta) -> Result<Self> {
        for (i, w) in requests.windows(2).enumerate() {
            if w[1].time < w[0].time {
                return invalid(format!("request {} goes back in time", i + 1));
            }
        }
        if requests.iter().any(|r| r.content == 0) {
            return invalid("content ids are 1-based");
        }
        Ok(Self { requests, meta })
    }

    /// Slot-indexed trace over the given content ids, all at location 0.
    pub fn from_contents(contents: &[usize]) -> Result<Self> {
        let requests = contents
            .iter()
            .enumerate()
            .map(|(i, &c)| Request {
                time: (i + 1) as f64,
                content: c,
                location: 0,
            })
            .collect();
        Self::new(requests, TraceMeta::default())
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn contents(&self) -> Vec<usize> {
        self.requests.iter().map(|r| r.content).collect()
    }

    /// Largest content id in the trace.
    pub fn max_content(&self) -> usize {
        self.requests.iter().map(|r| r.content).max().unwrap_or(0)
    }

    /// Request counts indexed by `content - 1`, padded to `n` entries.
    pub fn counts(&self, n: usize) -> Vec<u64> {
        let mut c = vec![0u64; n.max(self.max_content())];
        for r in &self.requests {
            c[r.content - 1] += 1;
        }
        c
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn alias(pop: &PopularityVector) -> WeightedAliasIndex<f64> {
    WeightedAliasIndex::new(pop.probs().to_vec()).expect("validated popularity vector")
}

/// Independent reference model: `length` i.i.d. draws at slots `1..=length`.
pub fn gen_irm(pop: &PopularityVector, length: usize, seed: u64) -> Trace {
    let mut rng = rng_for(seed);
    let dist = alias(pop);
    let requests = (1..=length)
        .map(|t| Request {
            time: t as f64,
            content: dist.sample(&mut rng) + 1,
            location: 0,
        })
        .collect();
    Trace {
        requests,
        meta: TraceMeta::new("irm", seed)
            .with("n", pop.len())
            .with("length", length),
    }
}

/// IRM with each request stamped by a location drawn uniformly from
/// `1..=locations`.
pub fn gen_irm_located(pop: &PopularityVector, length: usize, locations: usize, seed: u64) -> Result<Trace> {
    if locations == 0 {
        return invalid("need at least one location");
    }
    let mut rng = rng_for(seed);
    let dist = alias(pop);
    let requests = (1..=length)
        .map(|t| Request {
            time: t as f64,
            content: dist.sample(&mut rng) + 1,
            location: rng.random_range(1..=locations),
        })
        .collect();
    Ok(Trace {
        requests,
        meta: TraceMeta::new("irm-located", seed)
            .with("n", pop.len())
            .with("length", length)
            .with("locations", locations),
    })
}

/// IRM over popularity ranks where, after every `period` requests, the
/// content holding a uniformly drawn rank is replaced by a new content with
/// a fresh id. Ids start at `1..=N` and grow from `N + 1`.
pub fn gen_replacement(pop: &PopularityVector, length: usize, period: usize, seed: u64) -> Result<Trace> {
    if period == 0 {
        return invalid("replacement period must be positive");
    }
    let mut rng = rng_for(seed);
    let dist = alias(pop);
    let mut id_at: Vec<usize> = (1..=pop.len()).collect();
    let mut next_id = pop.len() + 1;
    let mut requests = Vec::with_capacity(length);
    for t in 1..=length {
        requests.push(Request {
            time: t as f64,
            content: id_at[dist.sample(&mut rng)],
            location: 0,
        });
        if t % period == 0 {
            let rank = rng.random_range(0..id_at.len());
            id_at[rank] = next_id;
            next_id += 1;
        }
    }
    Ok(Trace {
        requests,
        meta: TraceMeta::new("replacement", seed)
            .with("n", pop.len())
            .with("length", length)
            .with("period", period),
    })
}

/// Poisson IRM: exponential inter-arrival times with rate `rate` on
/// `[0, horizon]`, marks i.i.d. from `pop`.
pub fn gen_poisson_irm(pop: &PopularityVector, rate: f64, horizon: f64, seed: u64) -> Result<Trace> {
    if !(rate > 0.0 && rate.is_finite()) {
        return invalid("rate must be positive");
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return invalid("horizon must be nonnegative");
    }
    let mut rng = rng_for(seed);
    let dist = alias(pop);
    let gaps = Exp::new(rate).expect("positive rate");
    let mut requests = Vec::new();
    let mut t = gaps.sample(&mut rng);
    while t <= horizon {
        requests.push(Request {
            time: t,
            content: dist.sample(&mut rng) + 1,
            location: 0,
        });
        t += gaps.sample(&mut rng);
    }
    Ok(Trace {
        requests,
        meta: TraceMeta::new("poisson-irm", seed)
            .with("rate", rate)
            .with("horizon", horizon),
    })
}

/// Rectangular shot-noise model parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnmConfig {
    /// Shot arrival rate.
    pub nu: f64,
    /// Common shot duration.
    pub duration: f64,
    /// Pareto parameter of the shot heights, in (0, 1).
    pub tau: f64,
    /// Mean shot height.
    pub mean_popularity: f64,
    pub horizon: f64,
}

impl SnmConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("nu", self.nu),
            ("duration", self.duration),
            ("mean_popularity", self.mean_popularity),
            ("horizon", self.horizon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.tau >= 0.0 && self.tau < 1.0) {
            return invalid(format!("tau must lie in [0, 1), got {}", self.tau));
        }
        Ok(())
    }

    /// Smallest possible shot height.
    pub fn min_height(&self) -> f64 {
        self.mean_popularity * (1.0 - self.tau)
    }

    fn sample_height(&self, rng: &mut impl Rng) -> f64 {
        // U in (0, 1]
        let u = 1.0 - rng.random::<f64>();
        u.powf(-self.tau) * self.min_height()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shot {
    pub content: usize,
    pub arrival: f64,
    pub duration: f64,
    pub height: f64,
}

impl Shot {
    pub fn alive_at(&self, t: f64) -> bool {
        self.arrival <= t && t < self.arrival + self.duration
    }
}

/// Shots arriving on `[-duration, horizon]`, so the process is already in
/// steady state at time 0. Each shot carries its own content id.
pub fn gen_snm_shots(cfg: &SnmConfig, rng: &mut impl Rng) -> Result<Vec<Shot>> {
    cfg.validate()?;
    let gaps = Exp::new(cfg.nu).expect("positive rate");
    let mut shots = Vec::new();
    let mut t = -cfg.duration + gaps.sample(rng);
    while t <= cfg.horizon {
        shots.push(Shot {
            content: shots.len() + 1,
            arrival: t,
            duration: cfg.duration,
            height: cfg.sample_height(rng),
        });
        t += gaps.sample(rng);
    }
    Ok(shots)
}

/// Number of shots alive at time `t`.
pub fn alive_count(shots: &[Shot], t: f64) -> usize {
    shots.iter().filter(|s| s.alive_at(t)).count()
}

fn poisson_count(mean: f64, rng: &mut impl Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u64
}

/// Superposes the request processes of the given shots over `[0, horizon]`.
pub fn requests_from_shots(shots: &[Shot], horizon: f64, rng: &mut impl Rng) -> Vec<Request> {
    let mut requests = Vec::new();
    for s in shots {
        let lo = s.arrival.max(0.0);
        let hi = (s.arrival + s.duration).min(horizon);
        if hi <= lo {
            continue;
        }
        let k = poisson_count(s.height * (hi - lo), rng);
        for _ in 0..k {
            requests.push(Request {
                time: lo + (hi - lo) * rng.random::<f64>(),
                content: s.content,
                location: 0,
            });
        }
    }
    requests.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.content.cmp(&b.content)));
    requests
}

/// Rectangular shot-noise trace on `[0, horizon]`.
pub fn gen_snm(cfg: &SnmConfig, seed: u64) -> Result<Trace> {
    let mut rng = rng_for(seed);
    let shots = gen_snm_shots(cfg, &mut rng)?;
    let requests = requests_from_shots(&shots, cfg.horizon, &mut rng);
    Ok(Trace {
        requests,
        meta: TraceMeta::new("snm", seed)
            .with("nu", cfg.nu)
            .with("duration", cfg.duration)
            .with("tau", cfg.tau)
            .with("mean_popularity", cfg.mean_popularity)
            .with("horizon", cfg.horizon),
    })
}

const QUAD_REL_TOL: f64 = 1e-6;
const PRIOR_TAIL: f64 = 1e-9;

/// Logarithm of `int_lo^hi p^s e^{-a p} dp`, by double-exponential
/// quadrature on pieces around the peak with adaptive bisection.
fn log_gamma_window(s: f64, a: f64, lo: f64, hi: f64) -> Result<f64> {
    let g = |p: f64| s * p.ln() - a * p;
    let mode = if s > 0.0 { (s / a).clamp(lo, hi) } else { lo };
    let shift = g(mode);
    let h = |p: f64| (g(p) - shift).exp();

    let width = s.abs().max(1.0).sqrt() / a;
    let mut cuts = vec![lo, hi, mode];
    for k in [3.0, 12.0, 40.0] {
        cuts.push(mode - k * width);
        cuts.push(mode + k * width);
    }
    cuts.retain(|&c| c >= lo && c <= hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    // The peak contributes at least this much; it fixes the error target.
    let peak = cuts
        .windows(2)
        .map(|w| quadrature::integrate(h, w[0], w[1], 1e-12).integral)
        .fold(0.0, f64::max);
    let target = QUAD_REL_TOL * peak.max(f64::MIN_POSITIVE) / cuts.len() as f64;

    let mut total = 0.0;
    let mut stack: Vec<(f64, f64, u32)> = cuts.windows(2).map(|w| (w[0], w[1], 0)).collect();
    while let Some((x0, x1, depth)) = stack.pop() {
        let out = quadrature::integrate(h, x0, x1, target * 1e-2);
        if out.error_estimate <= target || x1 - x0 <= 1e-14 * x1.abs() {
            total += out.integral;
        } else if depth >= 40 {
            return Err(Error::NotConverged(format!(
                "posterior quadrature on [{x0}, {x1}] stalled at error {}",
                out.error_estimate
            )));
        } else {
            let m = 0.5 * (x0 + x1);
            stack.push((x0, m, depth + 1));
            stack.push((m, x1, depth + 1));
        }
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NotConverged(format!("posterior integral evaluated to {total}")));
    }
    Ok(total.ln() + shift)
}

/// Posterior mean of a shot's height after `k` requests in `age` time
/// units, under the Pareto prior of `cfg`.
pub fn snm_posterior_mean(k: u64, age: f64, cfg: &SnmConfig) -> Result<f64> {
    cfg.validate()?;
    if !(age > 0.0 && age.is_finite()) {
        return invalid(format!("age must be positive, got {age}"));
    }
    if cfg.tau == 0.0 {
        return Ok(cfg.mean_popularity);
    }
    let alpha = 1.0 / cfg.tau;
    let lo = cfg.min_height();
    let kf = k as f64;
    let prior_cut = lo * PRIOR_TAIL.powf(-cfg.tau);
    let lik_cut = lo + (kf + 52.0 + 10.0 * (kf + 2.0).sqrt()) / age;
    let hi = prior_cut.min(lik_cut);
    let num = log_gamma_window(kf - alpha, age, lo, hi)?;
    let den = log_gamma_window(kf - alpha - 1.0, age, lo, hi)?;
    Ok((num - den).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// Posterior means, one per observation.
    pub estimates: Vec<f64>,
    /// Selected content ids (1-based positions in the observation list),
    /// most popular first.
    pub selected: Vec<usize>,
}

fn selection_size(gamma: f64, n: usize) -> Result<usize> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return invalid(format!("gamma must lie in (0, 1], got {gamma}"));
    }
    Ok(((gamma * n as f64).ceil() as usize).min(n))
}

/// Selects the `ceil(gamma * N)` observations with the largest posterior
/// mean height. Each observation is `(request count, age)`.
pub fn snm_classify(observations: &[(u64, f64)], cfg: &SnmConfig, gamma: f64) -> Result<Classification> {
    let m = selection_size(gamma, observations.len())?;
    let estimates = observations
        .iter()
        .map(|&(k, a)| snm_posterior_mean(k, a, cfg))
        .collect::<Result<Vec<_>>>()?;
    let selected = top_m_by(&estimates, m).into_iter().map(|i| i + 1).collect();
    Ok(Classification { estimates, selected })
}

/// Selects by the frequency estimate `k / age`.
pub fn frequency_classify(observations: &[(u64, f64)], gamma: f64) -> Result<Vec<usize>> {
    let m = selection_size(gamma, observations.len())?;
    if observations.iter().any(|&(_, a)| !(a > 0.0)) {
        return invalid("ages must be positive");
    }
    let f: Vec<f64> = observations.iter().map(|&(k, a)| k as f64 / a).collect();
    Ok(top_m_by(&f, m).into_iter().map(|i| i + 1).collect())
}

/// Hit-rate losses `(posterior, frequency)` of both classifiers against the
/// oracle that knows every alive shot's true height, measured at time
/// `cfg.horizon`.
pub fn snm_classifier_losses(cfg: &SnmConfig, gamma: f64, seed: u64) -> Result<(f64, f64)> {
    let mut rng = rng_for(seed);
    let now = cfg.horizon;
    let alive: Vec<Shot> = gen_snm_shots(cfg, &mut rng)?
        .into_iter()
        .filter(|s| s.alive_at(now) && s.arrival < now)
        .collect();
    if alive.is_empty() {
        return invalid("no shot alive at the observation instant");
    }
    let obs: Vec<(u64, f64)> = alive
        .iter()
        .map(|s| {
            let age = now - s.arrival;
            (poisson_count(s.height * age, &mut rng), age)
        })
        .collect();
    let heights: Vec<f64> = alive.iter().map(|s| s.height).collect();
    let total: f64 = heights.iter().sum();
    let m = selection_size(gamma, alive.len())?;
    let best: f64 = top_m_by(&heights, m).iter().map(|&i| heights[i]).sum();
    let mass = |ids: &[usize]| ids.iter().map(|&i| heights[i - 1]).sum::<f64>();
    let post = snm_classify(&obs, cfg, gamma)?;
    let freq = frequency_classify(&obs, gamma)?;
    Ok(((best - mass(&post.selected)) / total, (best - mass(&freq)) / total))
}

/// Kernel on circular distance `d` in `[0, 1/2]`.
pub type Kernel = fn(f64) -> f64;

/// `5 (1 - 2d)^4`, which integrates to 1 over the circle.
pub fn default_kernel(d: f64) -> f64 {
    5.0 * (1.0 - 2.0 * d).powi(4)
}

#[derive(Debug, Clone)]
pub struct SbmConfig {
    pub locations: usize,
    pub global: PopularityVector,
    pub kernel: Kernel,
}

impl SbmConfig {
    pub fn new(locations: usize, global: PopularityVector) -> Self {
        Self {
            locations,
            global,
            kernel: default_kernel,
        }
    }
}

fn circular_distance(x: f64, y: f64) -> f64 {
    let d = (x - y).abs();
    d.min(1.0 - d)
}

/// Local popularities `p[n][l]` with random positions for contents and
/// locations on the unit circle.
pub fn gen_sbm(cfg: &SbmConfig, seed: u64) -> Result<Vec<Vec<f64>>> {
    if cfg.locations == 0 {
        return invalid("need at least one location");
    }
    let mut rng = rng_for(seed);
    let xs: Vec<f64> = (0..cfg.global.len()).map(|_| rng.random()).collect();
    let ys: Vec<f64> = (0..cfg.locations).map(|_| rng.random()).collect();
    sbm_with_positions(&cfg.global, &xs, &ys, cfg.kernel)
}

/// Local popularities for given positions. Rows are scaled so that the
/// average over locations equals the global popularity.
pub fn sbm_with_positions(global: &PopularityVector, xs: &[f64], ys: &[f64], kernel: Kernel) -> Result<Vec<Vec<f64>>> {
    if xs.len() != global.len() {
        return invalid("one position per content required");
    }
    if ys.is_empty() {
        return invalid("need at least one location");
    }
    let l = ys.len() as f64;
    let mut out = Vec::with_capacity(xs.len());
    for (&x, &p0) in xs.iter().zip(global.probs()) {
        let w: Vec<f64> = ys.iter().map(|&y| kernel(circular_distance(x, y))).collect();
        let s: f64 = w.iter().sum();
        let row = if s > 0.0 {
            w.iter().map(|k| l * p0 * k / s).collect()
        } else {
            vec![p0; ys.len()]
        };
        out.push(row);
    }
    Ok(out)
}

/// Writes `time,content_id,location_id` with a header row.
pub fn write_trace_csv(trace: &Trace, w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["time", "content_id", "location_id"])?;
    for r in &trace.requests {
        wr.write_record([r.time.to_string(), r.content.to_string(), r.location.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_trace_file(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    write_trace_csv(trace, std::fs::File::create(path)?)
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: u64) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| Error::Parse {
        line,
        msg: format!("missing {name}"),
    })?;
    raw.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad {name} {raw:?}"),
    })
}

/// Reads a trace written by [`write_trace_csv`]. The location column is
/// optional and defaults to 0; lines starting with `#` are skipped.
pub fn read_trace_csv(r: impl Read) -> Result<Trace> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).comment(Some(b'#')).from_reader(r);
    let mut requests: Vec<Request> = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() < 2 || rec.len() > 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 2 or 3 fields, found {}", rec.len()),
            });
        }
        let time: f64 = parse_field(&rec, 0, "time", line)?;
        let content: usize = parse_field(&rec, 1, "content_id", line)?;
        let location: usize = if rec.len() == 3 {
            parse_field(&rec, 2, "location_id", line)?
        } else {
            0
        };
        if !time.is_finite() || time < 0.0 {
            return Err(Error::Parse {
                line,
                msg: format!("time must be finite and nonnegative, got {time}"),
            });
        }
        if content == 0 {
            return Err(Error::Parse {
                line,
                msg: "content ids start at 1".into(),
            });
        }
        if requests.last().is_some_and(|p| time < p.time) {
            return Err(Error::Parse {
                line,
                msg: "time goes backwards".into(),
            });
        }
        requests.push(Request {
            time,
            content,
            location,
        });
    }
    Ok(Trace {
        requests,
        meta: TraceMeta::default(),
    })
}

pub fn read_trace_file(path: impl AsRef<Path>) -> Result<Trace> {
    read_trace_csv(std::fs::File::open(path)?)
}

/// Reads `content_id,count` rows into a dense vector indexed by
/// `content_id - 1`; absent ids count zero.
pub fn read_counts_csv(r: impl Read) -> Result<Vec<u64>> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut counts = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id: usize = parse_field(&rec, 0, "content_id", line)?;
        let c: u64 = parse_field(&rec, 1, "count", line)?;
        if id == 0 {
            return Err(Error::Parse {
                line,
                msg: "content ids start at 1".into(),
            });
        }
        if counts.len() < id {
            counts.resize(id, 0);
        }
        counts[id - 1] += c;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::popularity::PowerLaw;
    use proptest::prelude::*;

    fn snm_cfg() -> SnmConfig {
        SnmConfig {
            nu: 10.0,
            duration: 5.0,
            tau: 0.5,
            mean_popularity: 2.0,
            horizon: 400.0,
        }
    }

    #[test]
    fn irm_delta_and_determinism() {
        let pop = PopularityVector::delta(5, 2).unwrap();
        assert_eq!(gen_irm(&pop, 5, 1).contents(), vec![3; 5]);
        let pl = PowerLaw::new(0.8, 100).unwrap().to_popularity();
        assert_eq!(gen_irm(&pl, 1000, 9), gen_irm(&pl, 1000, 9));
        assert_ne!(gen_irm(&pl, 1000, 9).contents(), gen_irm(&pl, 1000, 10).contents());
    }

    #[test]
    fn irm_head_frequency_concentrates() {
        let pl = PowerLaw::new(0.8, 100).unwrap();
        let t = 100_000;
        let c = gen_irm(&pl.to_popularity(), t, 4).counts(100);
        let p = pl.pmf(1);
        let sd = (t as f64 * p * (1.0 - p)).sqrt();
        assert!((c[0] as f64 - t as f64 * p).abs() < 3.0 * sd);
    }

    #[test]
    fn irm_total_variation_small() {
        let pop = PowerLaw::new(0.7, 1000).unwrap().to_popularity();
        let mut tvs: Vec<f64> = (0..3)
            .map(|s| {
                let c = gen_irm(&pop, 1_000_000, s).counts(1000);
                0.5 * c
                    .iter()
                    .zip(pop.probs())
                    .map(|(&k, &p)| (k as f64 / 1e6 - p).abs())
                    .sum::<f64>()
            })
            .collect();
        tvs.sort_by(f64::total_cmp);
        assert!(tvs[1] <= 0.02, "median TV {}", tvs[1]);
    }

    #[test]
    fn located_irm_uses_all_locations() {
        let pop = PopularityVector::uniform(3).unwrap();
        let t = gen_irm_located(&pop, 4000, 4, 2).unwrap();
        let mut seen = [0usize; 5];
        for r in &t.requests {
            seen[r.location] += 1;
        }
        assert_eq!(seen[0], 0);
        assert!(seen[1..].iter().all(|&s| s > 900));
        assert!(gen_irm_located(&pop, 10, 0, 2).is_err());
    }

    #[test]
    fn poisson_irm_counts() {
        let pop = PopularityVector::uniform(2).unwrap();
        let t = gen_poisson_irm(&pop, 1.0, 1e4, 5).unwrap();
        assert!((t.len() as f64 - 1e4).abs() < 300.0);
        let t = gen_poisson_irm(&pop, 2.0, 1e4, 6).unwrap();
        for c in t.counts(2) {
            assert!((c as f64 / 1e4 - 1.0).abs() < 0.05);
        }
        assert!(gen_poisson_irm(&pop, 1.0, 0.0, 1).unwrap().is_empty());
        assert!(gen_poisson_irm(&pop, 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn poisson_irm_marks_pass_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let pop = PowerLaw::new(0.9, 20).unwrap().to_popularity();
        let t = gen_poisson_irm(&pop, 1.0, 2e5, 8).unwrap();
        let n = t.len() as f64;
        let stat: f64 = t
            .counts(20)
            .iter()
            .zip(pop.probs())
            .map(|(&c, &p)| (c as f64 - n * p).powi(2) / (n * p))
            .sum();
        let crit = ChiSquared::new(19.0).unwrap().inverse_cdf(0.99);
        assert!(stat < crit, "chi2 {stat} >= {crit}");
    }

    #[test]
    fn snm_alive_count_matches_nu_t() {
        let cfg = SnmConfig {
            nu: 10.0,
            duration: 5.0,
            tau: 0.4,
            mean_popularity: 1.0,
            horizon: 2000.0,
        };
        let mut rng = rng_for(3);
        let shots = gen_snm_shots(&cfg, &mut rng).unwrap();
        let avg = (0..400)
            .map(|i| alive_count(&shots, 5.0 * i as f64) as f64)
            .sum::<f64>()
            / 400.0;
        assert!((avg - 50.0).abs() < 5.0, "avg alive {avg}");
    }

    #[test]
    fn snm_zero_tau_heights_constant() {
        let cfg = SnmConfig { tau: 0.0, ..snm_cfg() };
        let mut rng = rng_for(1);
        let shots = gen_snm_shots(&cfg, &mut rng).unwrap();
        assert!(shots.iter().all(|s| s.height == 2.0));
    }

    #[test]
    fn snm_total_requests_campbell() {
        let cfg = snm_cfg();
        let mut tot = 0.0;
        for s in 0..10 {
            tot += gen_snm(&cfg, s).unwrap().len() as f64 / 10.0;
        }
        let expect = cfg.nu * cfg.horizon * cfg.duration * cfg.mean_popularity;
        assert!((tot - expect).abs() / expect < 0.05, "{tot} vs {expect}");
    }

    #[test]
    fn snm_horizontal_shots_are_irm() {
        let horizon = 5e4;
        let heights = [0.4, 0.2, 0.1];
        let shots: Vec<Shot> = heights
            .iter()
            .enumerate()
            .map(|(i, &h)| Shot {
                content: i + 1,
                arrival: 0.0,
                duration: horizon,
                height: h,
            })
            .collect();
        let mut rng = rng_for(11);
        let reqs = requests_from_shots(&shots, horizon, &mut rng);
        let t = Trace::new(reqs, TraceMeta::default()).unwrap();
        let c = t.counts(3);
        assert!((c[0] as f64 / c[1] as f64 - 2.0).abs() < 0.05);
        assert!((c[1] as f64 / c[2] as f64 - 2.0).abs() < 0.08);
    }

    #[test]
    fn snm_config_validation() {
        assert!(SnmConfig { tau: 1.0, ..snm_cfg() }.validate().is_err());
        assert!(SnmConfig { nu: 0.0, ..snm_cfg() }.validate().is_err());
    }

    #[test]
    fn posterior_matches_incomplete_gamma() {
        use statrs::function::gamma::{gamma_ur, ln_gamma};
        // int_lo^inf p^(s-1) e^(-a p) dp = a^-s Gamma(s) Q(s, a lo)
        let log_upper = |s: f64, a: f64, lo: f64| -s * a.ln() + ln_gamma(s) + gamma_ur(s, a * lo).ln();
        let cfg = snm_cfg();
        let alpha = 1.0 / cfg.tau;
        for &(k, a) in &[(5u64, 2.0), (10, 1.0), (40, 3.5), (200, 4.0), (3, 0.2)] {
            let got = snm_posterior_mean(k, a, &cfg).unwrap();
            let kf = k as f64;
            let lo = cfg.min_height();
            let want = (log_upper(kf - alpha + 1.0, a, lo) - log_upper(kf - alpha, a, lo)).exp();
            assert!((got - want).abs() / want < 1e-5, "k={k} a={a}: {got} vs {want}");
        }
    }

    #[test]
    fn posterior_monotone_and_symmetric() {
        let cfg = snm_cfg();
        let c = snm_classify(&[(3, 1.0), (3, 1.0)], &cfg, 0.5).unwrap();
        assert_eq!(c.estimates[0], c.estimates[1]);
        assert_eq!(c.selected, vec![1]);
        let lo = snm_posterior_mean(0, 2.0, &cfg).unwrap();
        let hi = snm_posterior_mean(10, 2.0, &cfg).unwrap();
        assert!(hi > lo);
        assert!(lo >= cfg.min_height());
        assert!(snm_posterior_mean(1, 0.0, &cfg).is_err());
        assert!(snm_classify(&[(1, 1.0)], &cfg, 0.0).is_err());
    }

    #[test]
    fn posterior_beats_frequency_estimate() {
        let cfg = SnmConfig {
            nu: 40.0,
            duration: 5.0,
            tau: 0.6,
            mean_popularity: 1.0,
            horizon: 10.0,
        };
        let (mut lp, mut lf) = (0.0, 0.0);
        for s in 0..20 {
            let (a, b) = snm_classifier_losses(&cfg, 0.1, s).unwrap();
            lp += a;
            lf += b;
        }
        assert!(lp <= lf, "posterior loss {lp} vs frequency loss {lf}");
    }

    #[test]
    fn sbm_single_location_collapses() {
        let g = PowerLaw::new(0.8, 30).unwrap().to_popularity();
        let p = gen_sbm(&SbmConfig::new(1, g.clone()), 4).unwrap();
        for (row, &p0) in p.iter().zip(g.probs()) {
            assert!((row[0] - p0).abs() < 1e-15);
        }
    }

    #[test]
    fn sbm_peak_at_matching_position() {
        let g = PopularityVector::uniform(2).unwrap();
        let p = sbm_with_positions(&g, &[0.3, 0.9], &[0.1, 0.3, 0.55, 0.95], default_kernel).unwrap();
        let argmax = |r: &Vec<f64>| (0..r.len()).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap();
        assert_eq!(argmax(&p[0]), 1);
        assert_eq!(argmax(&p[1]), 3);
    }

    #[test]
    fn kernel_integrates_to_one() {
        let n = 100_000;
        let s: f64 = (0..n).map(|i| default_kernel(circular_distance((i as f64 + 0.5) / n as f64, 0.0))).sum();
        assert!((s / n as f64 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn csv_round_trip_and_defaults() {
        let pop = PowerLaw::new(0.8, 50).unwrap().to_popularity();
        let t = gen_poisson_irm(&pop, 3.0, 50.0, 1).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&t, &mut buf).unwrap();
        let back = read_trace_csv(buf.as_slice()).unwrap();
        assert_eq!(back.requests, t.requests);

        let back = read_trace_csv("time,content_id\n1,4\n2.5,2\n".as_bytes()).unwrap();
        assert_eq!(back.requests[1].location, 0);
        assert_eq!(back.requests[1].content, 2);

        match read_trace_csv("time,content_id\n1,4\n0.5,2\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(read_trace_csv("time,content_id\n1,x\n".as_bytes()).is_err());
        assert!(read_trace_csv("time,content_id\n1,0\n".as_bytes()).is_err());
    }

    #[test]
    fn counts_csv() {
        let c = read_counts_csv("content_id,count\n3,5\n1,2\n".as_bytes()).unwrap();
        assert_eq!(c, vec![2, 0, 5]);
    }

    #[test]
    fn comment_lines_are_skipped() {
        let t = read_trace_csv("# cachelab 0.1.0\ntime,content_id\n1,4\n".as_bytes()).unwrap();
        assert_eq!(t.contents(), vec![4]);
        let c = read_counts_csv("# seed=1\ncontent_id,count\n2,7\n".as_bytes()).unwrap();
        assert_eq!(c, vec![0, 7]);
    }

    #[test]
    fn replacement_renews_ids() {
        let pop = PowerLaw::new(0.8, 20).unwrap().to_popularity();
        let t = gen_replacement(&pop, 1000, 10, 3).unwrap();
        assert_eq!(t.len(), 1000);
        // 99 replacements happen before the last request.
        assert!(t.max_content() <= 20 + 99);
        assert!(t.max_content() > 20);
        assert!(t.requests[..10].iter().all(|r| r.content <= 20));
        assert_eq!(t, gen_replacement(&pop, 1000, 10, 3).unwrap());
        assert!(gen_replacement(&pop, 10, 0, 3).is_err());
    }

    proptest! {
        #[test]
        fn sbm_rows_average_to_global(
            w in prop::collection::vec(0.01f64..1.0, 1..20),
            l in 1usize..12,
            seed in 0u64..1000,
        ) {
            let g = PopularityVector::from_weights(&w).unwrap();
            let p = gen_sbm(&SbmConfig::new(l, g.clone()), seed).unwrap();
            for (row, &p0) in p.iter().zip(g.probs()) {
                let avg = row.iter().sum::<f64>() / l as f64;
                prop_assert!((avg - p0).abs() < 1e-12);
            }
        }

        #[test]
        fn classify_selects_ceil_gamma(
            obs in prop::collection::vec((0u64..30, 0.1f64..6.0), 1..25),
            gamma in 0.01f64..1.0,
        ) {
            let c = snm_classify(&obs, &snm_cfg(), gamma).unwrap();
            prop_assert_eq!(c.selected.len(), (gamma * obs.len() as f64).ceil() as usize);
        }

        #[test]
        fn generated_traces_are_sorted(seed in 0u64..200) {
            let t = gen_snm(&SnmConfig { horizon: 20.0, ..snm_cfg() }, seed).unwrap();
            prop_assert!(t.requests.windows(2).all(|w| w[0].time <= w[1].time));
        }
    }
}
