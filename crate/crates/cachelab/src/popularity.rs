//! Power-law popularity, generalized harmonic numbers, hit-probability
//! bounds, maximum-likelihood exponent fitting and catalog-size estimation.

use serde::Serialize;

use crate::error::{invalid, Result};

/// Running sum with Kahan compensation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !tau.is_finite() || tau < 0.0 {
        return invalid(format!("exponent must be finite and nonnegative, got {tau}"));
    }
    Ok(())
}

/// Generalized harmonic number `H_tau(n) = sum_{j=1..n} j^-tau`, summed
/// smallest term first with compensation.
pub fn harmonic(tau: f64, n: u64) -> Result<f64> {
    check_tau(tau)?;
    Ok(harmonic_unchecked(tau, n))
}

pub(crate) fn harmonic_unchecked(tau: f64, n: u64) -> f64 {
    if tau == 0.0 {
        return n as f64;
    }
    let mut acc = Kahan::default();
    for j in (1..=n).rev() {
        acc.add((j as f64).powf(-tau));
    }
    acc.value()
}

/// Closed-form approximation of `H_tau(n)`.
pub fn harmonic_approx(tau: f64, n: u64) -> Result<f64> {
    check_tau(tau)?;
    if n == 0 {
        return invalid("harmonic_approx needs n >= 1");
    }
    let nf = n as f64;
    Ok(if (tau - 1.0).abs() < 1e-9 {
        nf.ln()
    } else if tau < 1.0 {
        nf.powf(1.0 - tau) / (1.0 - tau)
    } else {
        1.0 / (tau - 1.0)
    })
}

/// Lower and upper integral brackets on `H_tau(n)`. At `tau = 1` these are
/// `ln(n+1)` and `ln(n) + 1`.
pub fn harmonic_bounds(tau: f64, n: u64) -> Result<(f64, f64)> {
    check_tau(tau)?;
    if n == 0 {
        return invalid("harmonic_bounds needs n >= 1");
    }
    let nf = n as f64;
    if (tau - 1.0).abs() < 1e-9 {
        return Ok(((nf + 1.0).ln(), nf.ln() + 1.0));
    }
    let e = 1.0 - tau;
    Ok((((nf + 1.0).powf(e) - 1.0) / e, (nf.powf(e) - 1.0) / e + 1.0))
}

/// Truncated zeta law over ranks `1..=n_catalog`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLaw {
    tau: f64,
    n_catalog: u64,
    norm: f64,
}

impl PowerLaw {
    pub fn new(tau: f64, n_catalog: u64) -> Result<Self> {
        check_tau(tau)?;
        if n_catalog == 0 {
            return invalid("catalog size must be at least 1");
        }
        Ok(Self {
            tau,
            n_catalog,
            norm: harmonic_unchecked(tau, n_catalog),
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n_catalog(&self) -> u64 {
        self.n_catalog
    }

    /// Probability of rank `n` (1-based); zero outside the catalog.
    pub fn pmf(&self, n: u64) -> f64 {
        if n == 0 || n > self.n_catalog {
            return 0.0;
        }
        (n as f64).powf(-self.tau) / self.norm
    }

    pub fn to_popularity(&self) -> PopularityVector {
        let probs = (1..=self.n_catalog).map(|n| self.pmf(n)).collect();
        PopularityVector { probs }
    }
}

/// Normalized request probabilities; entry `i` belongs to content `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopularityVector {
    probs: Vec<f64>,
}

impl PopularityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return invalid("popularity vector is empty");
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return invalid("probabilities must be finite and nonnegative");
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return invalid(format!("probabilities sum to {s}, expected 1"));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return invalid("weights must be finite and nonnegative");
        }
        let s: f64 = weights.iter().sum();
        if weights.is_empty() || s <= 0.0 {
            return invalid("weights must have positive total");
        }
        Ok(Self {
            probs: weights.iter().map(|w| w / s).collect(),
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("catalog size must be at least 1");
        }
        Ok(Self {
            probs: vec![1.0 / n as f64; n],
        })
    }

    /// All mass on index `k` (0-based) of an `n`-item catalog.
    pub fn delta(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return invalid(format!("index {k} outside catalog of size {n}"));
        }
        let mut probs = vec![0.0; n];
        probs[k] = 1.0;
        Ok(Self { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Indices of the `m` most popular entries, ties to the smaller index.
    pub fn top_indices(&self, m: usize) -> Vec<usize> {
        top_m_by(&self.probs, m)
    }
}

/// Indices of the `m` largest values, ties broken by the smaller index,
/// returned in descending order of value.
pub(crate) fn top_m_by(values: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

/// Hit probability of a cache of size `m` that stores the `m` most popular
/// contents.
pub fn max_hit_probability(pop: &PopularityVector, m: usize) -> Result<f64> {
    if m > pop.len() {
        return invalid(format!("cache size {m} exceeds catalog size {}", pop.len()));
    }
    let mut acc = Kahan::default();
    for i in pop.top_indices(m) {
        acc.add(pop.probs[i]);
    }
    Ok(acc.value())
}

/// Closed-form approximation of the maximum hit probability of a cache of
/// size `m` under a power law over `n` contents.
pub fn approx_hit_probability(tau: f64, m: u64, n: u64) -> Result<f64> {
    check_tau(tau)?;
    if n < 2 || m == 0 || m > n {
        return invalid(format!("need 1 <= m <= n and n >= 2, got m={m}, n={n}"));
    }
    let (mf, nf) = (m as f64, n as f64);
    Ok(if (tau - 1.0).abs() < 1e-9 {
        mf.ln() / nf.ln()
    } else if tau < 1.0 {
        (mf / nf).powf(1.0 - tau)
    } else {
        1.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    /// Entry `i` of the input is the frequency of content `i + 1`.
    Labeled,
    /// Labels are unknown; frequencies are sorted and ranks used as labels.
    Ranked,
    /// As `Ranked`, keeping only the `h` highest ranks (renormalized).
    RankedHead(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub tau_mle: f64,
    pub log_likelihood: f64,
    pub mode: FitMode,
    /// The maximizer sits on the edge of the search bracket.
    pub at_bound: bool,
}

pub const MLE_BRACKET: (f64, f64) = (0.0, 5.0);
pub const MLE_TOL: f64 = 1e-5;

/// Power-law log-likelihood per sample for the given exponent.
pub fn zipf_log_likelihood(frequencies: &[f64], tau: f64) -> f64 {
    let s = weighted_log_rank(frequencies);
    -tau * s - harmonic_unchecked(tau, frequencies.len() as u64).ln()
}

fn weighted_log_rank(f: &[f64]) -> f64 {
    let mut acc = Kahan::default();
    for (i, &x) in f.iter().enumerate() {
        if x > 0.0 {
            acc.add(x * ((i + 1) as f64).ln());
        }
    }
    acc.value()
}

/// Maximum-likelihood power-law exponent by golden-section search on
/// [`MLE_BRACKET`].
pub fn fit_zipf_mle(frequencies: &[f64], mode: FitMode) -> Result<FitResult> {
    if frequencies.is_empty() {
        return invalid("no frequencies given");
    }
    if frequencies.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return invalid("frequencies must be finite and nonnegative");
    }
    let total: f64 = frequencies.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return invalid(format!("frequencies sum to {total}, expected 1"));
    }

    let f: Vec<f64> = match mode {
        FitMode::Labeled => frequencies.to_vec(),
        FitMode::Ranked | FitMode::RankedHead(_) => {
            let mut v = frequencies.to_vec();
            v.sort_by(|a, b| b.total_cmp(a));
            if let FitMode::RankedHead(h) = mode {
                if h == 0 {
                    return invalid("head size must be positive");
                }
                v.truncate(h);
                let s: f64 = v.iter().sum();
                if s <= 0.0 {
                    return invalid("head carries no mass");
                }
                v.iter_mut().for_each(|x| *x /= s);
            }
            v
        }
    };

    let s = weighted_log_rank(&f);
    let n = f.len() as u64;
    let lambda = |tau: f64| -tau * s - harmonic_unchecked(tau, n).ln();

    let (tau, ll) = golden_max(lambda, MLE_BRACKET.0, MLE_BRACKET.1, MLE_TOL);
    let at_bound = tau - MLE_BRACKET.0 < 10.0 * MLE_TOL || MLE_BRACKET.1 - tau < 10.0 * MLE_TOL;
    Ok(FitResult {
        tau_mle: tau,
        log_likelihood: ll,
        mode,
        at_bound,
    })
}

/// Golden-section maximization of a unimodal function. Returns the best
/// point seen and its value, including the bracket ends.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for x in [lo, hi] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Probabilities used for the unseen-mass term of the catalog estimate.
#[derive(Debug, Clone, Default)]
pub enum CatalogModel {
    /// `p_n = count_n / K` over the visible catalog.
    #[default]
    Empirical,
    /// Sum `(1 - p_n)^K` over the whole support of an assumed law.
    Model(PopularityVector),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CatalogEstimate {
    pub visible: u64,
    pub expected_unseen: f64,
    pub estimated_total: f64,
}

/// Estimates the catalog size from request counts gathered over `k` requests.
pub fn estimate_catalog(counts: &[u64], k: u64, model: &CatalogModel) -> Result<CatalogEstimate> {
    if counts.is_empty() {
        return invalid("no counts given");
    }
    if k == 0 {
        return invalid("number of requests must be positive");
    }
    if let Some(c) = counts.iter().find(|&&c| c > k) {
        return invalid(format!("count {c} exceeds the number of requests {k}"));
    }
    let visible = counts.iter().filter(|&&c| c > 0).count() as u64;
    let kf = k as f64;
    let mut acc = Kahan::default();
    match model {
        CatalogModel::Empirical => {
            for &c in counts.iter().filter(|&&c| c > 0) {
                acc.add((1.0 - c as f64 / kf).powf(kf));
            }
        }
        CatalogModel::Model(pop) => {
            for &p in pop.probs() {
                acc.add((1.0 - p).powf(kf));
            }
        }
    }
    let e0 = acc.value();
    Ok(CatalogEstimate {
        visible,
        expected_unseen: e0,
        estimated_total: visible as f64 + e0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{weighted::WeightedAliasIndex, Distribution};

    fn sample_counts(pop: &PopularityVector, k: usize, seed: u64) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alias = WeightedAliasIndex::new(pop.probs().to_vec()).unwrap();
        let mut c = vec![0u64; pop.len()];
        for _ in 0..k {
            c[alias.sample(&mut rng)] += 1;
        }
        c
    }

    #[test]
    fn harmonic_small_cases() {
        assert_eq!(harmonic(0.6, 1).unwrap(), 1.0);
        assert_eq!(harmonic(0.0, 7).unwrap(), 7.0);
        assert_eq!(harmonic(1.3, 0).unwrap(), 0.0);
        let direct = 1.0 + 0.5 + 1.0 / 3.0 + 0.25;
        assert!((harmonic(1.0, 4).unwrap() - direct).abs() < 1e-15);
        assert!(harmonic(-0.1, 3).is_err());
        assert!(harmonic(f64::NAN, 3).is_err());
    }

    #[test]
    fn harmonic_approx_cases() {
        let h = harmonic_approx(1.0, 148).unwrap();
        assert!((h - 148f64.ln()).abs() < 1e-12);
        assert!((h - 5.0).abs() < 0.01);
        let exact = harmonic(1.0, 148).unwrap();
        // ln N misses the Euler constant; the relative gap at N=148 is ~10%.
        assert!((h - exact).abs() / exact < 0.12);
        assert_eq!(harmonic_approx(0.0, 100).unwrap(), 100.0);
        assert_eq!(harmonic_approx(2.0, 1_000_000).unwrap(), 1.0);
        assert_eq!(
            harmonic_approx(1.0 + 1e-10, 50).unwrap(),
            harmonic_approx(1.0, 50).unwrap()
        );
        assert!(harmonic_approx(0.5, 0).is_err());
    }

    #[test]
    fn powerlaw_pmf_normalized() {
        for &(tau, n) in &[(0.0, 10), (0.6, 1000), (1.0, 5000), (2.3, 200)] {
            let p = PowerLaw::new(tau, n).unwrap();
            let s: f64 = (1..=n).map(|k| p.pmf(k)).sum();
            assert!((s - 1.0).abs() < 1e-12, "tau={tau} n={n} sum={s}");
            assert_eq!(p.pmf(0), 0.0);
            assert_eq!(p.pmf(n + 1), 0.0);
        }
        assert!(PowerLaw::new(0.5, 0).is_err());
    }

    #[test]
    fn popularity_vector_validation() {
        assert!(PopularityVector::new(vec![0.5, 0.4]).is_err());
        assert!(PopularityVector::new(vec![1.2, -0.2]).is_err());
        assert!(PopularityVector::new(vec![]).is_err());
        let v = PopularityVector::from_weights(&[2.0, 1.0, 1.0]).unwrap();
        assert_eq!(v.probs(), &[0.5, 0.25, 0.25]);
        assert!(PopularityVector::delta(3, 3).is_err());
    }

    #[test]
    fn max_hit_examples() {
        let p = PopularityVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        assert_eq!(max_hit_probability(&p, 1).unwrap(), 0.5);
        assert!(max_hit_probability(&p, 4).is_err());
        let u = PopularityVector::uniform(10).unwrap();
        assert!((max_hit_probability(&u, 3).unwrap() - 0.3).abs() < 1e-12);

        let pl = PowerLaw::new(0.6, 1000).unwrap().to_popularity();
        let exact = max_hit_probability(&pl, 100).unwrap();
        let approx = approx_hit_probability(0.6, 100, 1000).unwrap();
        assert!((approx - 0.1f64.powf(0.4)).abs() < 1e-12);
        assert!((exact - approx).abs() < 0.05, "exact {exact} approx {approx}");
    }

    #[test]
    fn top_indices_tie_break() {
        let p = PopularityVector::new(vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        assert_eq!(p.top_indices(2), vec![0, 1]);
    }

    #[test]
    fn mle_on_delta_hits_upper_bound() {
        let mut f = vec![0.0; 50];
        f[0] = 1.0;
        for mode in [FitMode::Labeled, FitMode::Ranked, FitMode::RankedHead(10)] {
            let r = fit_zipf_mle(&f, mode).unwrap();
            assert!((r.tau_mle - 5.0).abs() < 1e-4);
            assert!(r.at_bound);
        }
    }

    #[test]
    fn mle_exact_pmf_recovers_tau() {
        for &tau in &[0.3, 0.8, 1.0, 1.6] {
            let f = PowerLaw::new(tau, 1000).unwrap().to_popularity();
            let r = fit_zipf_mle(f.probs(), FitMode::Labeled).unwrap();
            assert!((r.tau_mle - tau).abs() < 1e-3, "tau={tau} fit={}", r.tau_mle);
            assert!(!r.at_bound);
        }
    }

    #[test]
    fn mle_sampled_labeled() {
        let n = 10_000;
        let pop = PowerLaw::new(0.8, n).unwrap().to_popularity();
        for seed in 0..10 {
            let c = sample_counts(&pop, 100_000, seed);
            let f: Vec<f64> = c.iter().map(|&x| x as f64 / 100_000.0).collect();
            let r = fit_zipf_mle(&f, FitMode::Labeled).unwrap();
            assert!((r.tau_mle - 0.8).abs() < 0.02, "seed {seed}: {}", r.tau_mle);
        }
    }

    #[test]
    fn mle_rejects_bad_input() {
        assert!(fit_zipf_mle(&[], FitMode::Labeled).is_err());
        assert!(fit_zipf_mle(&[0.3, 0.3], FitMode::Labeled).is_err());
        assert!(fit_zipf_mle(&[1.0], FitMode::RankedHead(0)).is_err());
    }

    #[test]
    fn log_likelihood_concave_on_grid() {
        for &n in &[100usize, 1000] {
            let f = PowerLaw::new(0.9, n as u64).unwrap().to_popularity();
            let grid: Vec<f64> = (0..100).map(|i| 3.0 * i as f64 / 99.0).collect();
            let vals: Vec<f64> = grid.iter().map(|&t| zipf_log_likelihood(f.probs(), t)).collect();
            for w in vals.windows(3) {
                assert!(w[0] + w[2] - 2.0 * w[1] <= 1e-12);
            }
            let best = grid
                .iter()
                .zip(&vals)
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert!((best - 0.9).abs() < 0.04);
        }
    }

    #[test]
    fn catalog_examples() {
        let e = estimate_catalog(&[30, 30], 60, &CatalogModel::Empirical).unwrap();
        assert_eq!(e.visible, 2);
        assert!(e.expected_unseen < 1e-15);

        let e = estimate_catalog(&[1], 100, &CatalogModel::Empirical).unwrap();
        assert!((e.expected_unseen - 0.99f64.powi(100)).abs() < 1e-12);
        assert!((e.expected_unseen - 0.366).abs() < 1e-3);

        assert!(estimate_catalog(&[1], 0, &CatalogModel::Empirical).is_err());
        assert!(estimate_catalog(&[], 5, &CatalogModel::Empirical).is_err());
    }

    #[test]
    fn catalog_model_based_recovers_size() {
        let pop = PowerLaw::new(1.0, 1000).unwrap().to_popularity();
        let model = CatalogModel::Model(pop.clone());
        let mut avg = 0.0;
        for seed in 0..20 {
            let c = sample_counts(&pop, 500, seed);
            avg += estimate_catalog(&c, 500, &model).unwrap().estimated_total / 20.0;
        }
        assert!((avg - 1000.0).abs() / 1000.0 < 0.15, "avg {avg}");
    }

    #[test]
    fn catalog_plugin_underestimates() {
        let pop = PowerLaw::new(1.0, 1000).unwrap().to_popularity();
        let c = sample_counts(&pop, 500, 3);
        let e = estimate_catalog(&c, 500, &CatalogModel::Empirical).unwrap();
        assert!(e.estimated_total >= e.visible as f64);
        assert!(e.estimated_total < 500.0);
    }

    proptest! {
        #[test]
        fn harmonic_within_integral_bounds(tau in 0.0f64..3.0, n in 1u64..5000) {
            let h = harmonic(tau, n).unwrap();
            let (lo, hi) = harmonic_bounds(tau, n).unwrap();
            prop_assert!(lo <= h * (1.0 + 1e-12) && h <= hi * (1.0 + 1e-12),
                "lo={lo} h={h} hi={hi}");
        }

        #[test]
        fn max_hit_monotone(w in prop::collection::vec(0.0f64..1.0, 1..40)) {
            prop_assume!(w.iter().sum::<f64>() > 0.0);
            let p = PopularityVector::from_weights(&w).unwrap();
            let mut prev = 0.0;
            for m in 0..=p.len() {
                let h = max_hit_probability(&p, m).unwrap();
                prop_assert!(h + 1e-12 >= prev);
                prev = h;
            }
            prop_assert!((prev - 1.0).abs() < 1e-9);
        }

        #[test]
        fn mle_exact_input_roundtrip(tau in 0.05f64..2.5, n in 50u64..400) {
            let f = PowerLaw::new(tau, n).unwrap().to_popularity();
            let r = fit_zipf_mle(f.probs(), FitMode::Labeled).unwrap();
            prop_assert!((r.tau_mle - tau).abs() < 1e-3);
        }

        #[test]
        fn catalog_total_at_least_visible(c in prop::collection::vec(0u64..20, 1..50)) {
            let k: u64 = c.iter().sum::<u64>().max(1);
            let e = estimate_catalog(&c, k, &CatalogModel::Empirical).unwrap();
            prop_assert!(e.estimated_total >= e.visible as f64);
        }
    }
}
