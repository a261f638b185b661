//! One function per subcommand: validate arguments, call the library, shape
//! the result into an [`Artifact`].

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use cachelab::bsca::{example_network, lazy_lru_utilities, mlru_utilities, run_bsca, BscaConfig, BscaStep};
use cachelab::eviction::{
    che_characteristic_time, lru_hit_prob_che, simulate_ids, ttl_cum_solve, CumConfig, CumWeights, EvictionModel,
    PolicyKind, SimConfig, StepRule, TtlModel,
};
use cachelab::gridlaws::{scaling_experiment, Regime};
use cachelab::netcache::{
    exhaustive_placement_opt, femto_greedy, femto_objective, hierarchical_greedy, hierarchical_local_search,
    random_femto_instance, routing_savings, served_requests, symmetric_knapsack_bound, DemandMatrix, FemtoInstance,
    NetworkSpec, Placement, SwapRule, TreeNet,
};
use cachelab::online::{diameter, run_oga_from, OgaInit, StepSize};
use cachelab::popularity::{estimate_catalog, fit_zipf_mle, CatalogModel, FitMode, PopularityVector, PowerLaw};
use cachelab::traces::{
    gen_irm, gen_irm_located, gen_poisson_irm, gen_replacement, gen_snm, read_counts_csv, read_trace_file, SnmConfig,
    Trace,
};

use crate::output::{Artifact, Table};
use crate::{row, CliError, Ctx};

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn zipf(tau: f64, n: u64) -> Result<PopularityVector, CliError> {
    Ok(PowerLaw::new(tau, n)?.to_popularity())
}

pub fn load_trace(path: &Path) -> Result<Trace, CliError> {
    match read_trace_file(path) {
        Ok(t) => Ok(t),
        Err(cachelab::Error::Io(e)) => Err(config(format!("cannot read {}: {e}", path.display()))),
        Err(e) => Err(config(format!("{}: {e}", path.display()))),
    }
}

fn load_counts(path: &Path) -> Result<Vec<u64>, CliError> {
    let f = File::open(path).map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
    read_counts_csv(f).map_err(|e| config(format!("{}: {e}", path.display())))
}

/// Request counts from either a trace or a `content_id,count` file.
#[derive(Debug, Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct CountsSource {
    /// Trace CSV (time, content_id[, location_id]).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Counts CSV (content_id, count).
    #[arg(long)]
    counts: Option<PathBuf>,
}

impl CountsSource {
    fn load(&self) -> Result<Vec<u64>, CliError> {
        match (&self.trace, &self.counts) {
            (Some(t), _) => {
                let trace = load_trace(t)?;
                Ok(trace.counts(trace.max_content()))
            }
            (_, Some(c)) => load_counts(c),
            _ => unreachable!("clap enforces exactly one source"),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceModel {
    Irm,
    PoissonIrm,
    IrmLocated,
    Snm,
    Replacement,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateTraceArgs {
    #[arg(long, value_enum, default_value_t = TraceModel::Irm)]
    model: TraceModel,
    /// Zipf exponent (shot height exponent for snm, in (0, 1)).
    #[arg(long, default_value_t = 0.8)]
    tau: f64,
    /// Catalog size.
    #[arg(long, default_value_t = 10_000)]
    n: u64,
    /// Number of requests (irm, irm-located, replacement).
    #[arg(long, default_value_t = 100_000)]
    length: usize,
    /// Request rate (poisson-irm).
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    /// Time horizon (poisson-irm, snm).
    #[arg(long, default_value_t = 10_000.0)]
    horizon: f64,
    /// Number of locations (irm-located).
    #[arg(long, default_value_t = 4)]
    locations: usize,
    /// Shot arrival rate (snm).
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    /// Shot duration (snm).
    #[arg(long, default_value_t = 5_000.0)]
    duration: f64,
    /// Mean shot height (snm).
    #[arg(long, default_value_t = 8e-4)]
    mean_popularity: f64,
    /// Requests between content replacements (replacement).
    #[arg(long, default_value_t = 50)]
    period: usize,
}

pub fn generate_trace(a: &GenerateTraceArgs, ctx: &Ctx) -> Result<Artifact, CliError> {
    let seed = ctx.seed("generate-trace")?;
    let trace = match a.model {
        TraceModel::Irm => gen_irm(&zipf(a.tau, a.n)?, a.length, seed),
        TraceModel::PoissonIrm => gen_poisson_irm(&zipf(a.tau, a.n)?, a.rate, a.horizon, seed)?,
        TraceModel::IrmLocated => gen_irm_located(&zipf(a.tau, a.n)?, a.length, a.locations, seed)?,
        TraceModel::Replacement => gen_replacement(&zipf(a.tau, a.n)?, a.length, a.period, seed)?,
        TraceModel::Snm => gen_snm(
            &SnmConfig {
                nu: a.nu,
                duration: a.duration,
                tau: a.tau,
                mean_popularity: a.mean_popularity,
                horizon: a.horizon,
            },
            seed,
        )?,
    };
    let mut table = Table::new(&["time", "content_id", "location_id"]);
    for r in &trace.requests {
        table.push(row![r.time, r.content, r.location]);
    }
    let distinct = trace.counts(trace.max_content()).iter().filter(|&&c| c > 0).count();
    Artifact::with_table(
        table,
        json!({
            "generator": trace.meta.generator,
            "params": trace.meta.params,
            "requests": trace.len(),
            "distinct_contents": distinct,
        }),
    )
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModeArg {
    Labeled,
    Ranked,
    RankedHead,
}

#[derive(Debug, Args, Serialize)]
pub struct FitZipfArgs {
    #[command(flatten)]
    source: CountsSource,
    #[arg(long, value_enum, default_value_t = FitModeArg::Labeled)]
    mode: FitModeArg,
    /// Ranks kept by ranked-head.
    #[arg(long, default_value_t = 1000)]
    head: usize,
}

pub fn fit_zipf(a: &FitZipfArgs) -> Result<Artifact, CliError> {
    let counts = a.source.load()?;
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(config("no requests to fit"));
    }
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let mode = match a.mode {
        FitModeArg::Labeled => FitMode::Labeled,
        FitModeArg::Ranked => FitMode::Ranked,
        FitModeArg::RankedHead => FitMode::RankedHead(a.head),
    };
    let fit = fit_zipf_mle(&freqs, mode)?;
    Artifact::json(json!({ "fit": fit, "requests": total, "catalog": counts.len() }))
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CatalogModelArg {
    /// Unseen mass from the empirical frequencies.
    Empirical,
    /// Unseen mass over a Zipf law with `--tau` on `--support` contents.
    Zipf,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateCatalogArgs {
    #[command(flatten)]
    source: CountsSource,
    #[arg(long, value_enum, default_value_t = CatalogModelArg::Empirical)]
    model: CatalogModelArg,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    support: Option<u64>,
}

pub fn estimate_catalog_cmd(a: &EstimateCatalogArgs) -> Result<Artifact, CliError> {
    let counts = a.source.load()?;
    let k: u64 = counts.iter().sum();
    let model = match a.model {
        CatalogModelArg::Empirical => CatalogModel::Empirical,
        CatalogModelArg::Zipf => {
            let (Some(tau), Some(support)) = (a.tau, a.support) else {
                return Err(config("--model zipf needs --tau and --support"));
            };
            CatalogModel::Model(zipf(tau, support)?)
        }
    };
    Artifact::json(estimate_catalog(&counts, k, &model)?)
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyArg {
    Lru,
    Lfu,
    Fifo,
    Random,
    Qlru,
    LruK,
    Belady,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    I1,
    I2,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum)]
    policy: PolicyArg,
    /// Cache capacity M.
    #[arg(long)]
    cache: usize,
    #[arg(long, value_enum, default_value_t = ModelArg::I1)]
    model: ModelArg,
    /// Admission probability of qlru.
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    /// Number of layers of lru-k.
    #[arg(long, default_value_t = 2)]
    layers: usize,
}

pub fn simulate(a: &SimulateArgs, ctx: &Ctx) -> Result<Artifact, CliError> {
    let policy = match a.policy {
        PolicyArg::Lru => PolicyKind::Lru,
        PolicyArg::Lfu => PolicyKind::Lfu,
        PolicyArg::Fifo => PolicyKind::Fifo,
        PolicyArg::Random => PolicyKind::Random,
        PolicyArg::Qlru => PolicyKind::QLru(a.q),
        PolicyArg::LruK => PolicyKind::LruK(a.layers),
        PolicyArg::Belady => PolicyKind::Belady,
    };
    let seed = match policy {
        PolicyKind::Random | PolicyKind::QLru(_) => ctx.seed("randomized policies")?,
        _ => ctx.seed.unwrap_or(0),
    };
    let model = match a.model {
        ModelArg::I1 => EvictionModel::I1,
        ModelArg::I2 => EvictionModel::I2,
    };
    let trace = load_trace(&a.trace)?;
    let cfg = SimConfig::new(policy, a.cache).model(model).seed(seed);
    Artifact::json(simulate_ids(&cfg, &trace.contents())?)
}

#[derive(Debug, Args, Serialize)]
pub struct CheArgs {
    #[arg(long)]
    tau: f64,
    #[arg(long)]
    n: u64,
    /// Cache size as a fraction of the catalog.
    #[arg(long, conflicts_with = "cache")]
    gamma: Option<f64>,
    /// Cache size M.
    #[arg(long)]
    cache: Option<usize>,
    /// Aggregate request rate.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

pub fn cache_size(gamma: Option<f64>, cache: Option<usize>, n: u64) -> Result<usize, CliError> {
    match (gamma, cache) {
        (_, Some(m)) => Ok(m),
        (Some(g), None) if g > 0.0 && g < 1.0 => Ok((g * n as f64).round() as usize),
        (Some(g), None) => Err(config(format!("--gamma must lie in (0, 1), got {g}"))),
        (None, None) => Err(config("give --gamma or --cache")),
    }
}

pub fn che(a: &CheArgs) -> Result<Artifact, CliError> {
    let pop = zipf(a.tau, a.n)?;
    let m = cache_size(a.gamma, a.cache, a.n)?;
    Artifact::json(json!({
        "t_hat": che_characteristic_time(&pop, a.lambda, m)?,
        "hit_prob": lru_hit_prob_che(&pop, a.lambda, m)?,
        "cache": m,
    }))
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TtlModelArg {
    Reset,
    NonReset,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRuleArg {
    Diminishing,
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightsArg {
    Uniform,
    Popularity,
}

#[derive(Debug, Args, Serialize)]
pub struct TtlCumArgs {
    #[arg(long)]
    tau: f64,
    #[arg(long)]
    n: u64,
    #[arg(long)]
    cache: usize,
    /// Fairness parameter, positive and different from 1.
    #[arg(long)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = TtlModelArg::Reset)]
    model: TtlModelArg,
    #[arg(long, value_enum, default_value_t = WeightsArg::Uniform)]
    weights: WeightsArg,
    #[arg(long, value_enum, default_value_t = StepRuleArg::Diminishing)]
    rule: StepRuleArg,
    /// Base step size of the dual update.
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 100_000)]
    steps: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

pub fn ttl_cum(a: &TtlCumArgs) -> Result<Artifact, CliError> {
    let pop = zipf(a.tau, a.n)?;
    let model = match a.model {
        TtlModelArg::Reset => TtlModel::Reset,
        TtlModelArg::NonReset => TtlModel::NonReset,
    };
    let mut cfg = CumConfig::new(a.alpha, model);
    cfg.steps = a.steps;
    cfg.tol = a.tol;
    cfg.rule = match a.rule {
        StepRuleArg::Diminishing => StepRule::Diminishing(a.eta),
        StepRuleArg::Fixed => StepRule::Fixed(a.eta),
        StepRuleArg::Adaptive => StepRule::Adaptive(a.eta),
    };
    cfg.weights = match a.weights {
        WeightsArg::Uniform => CumWeights::Uniform,
        WeightsArg::Popularity => CumWeights::Popularity,
    };
    let sol = ttl_cum_solve(&pop, a.lambda, a.cache, &cfg)?;
    let mut table = Table::new(&["content", "popularity", "hit_prob", "timer"]);
    for (i, (p, (h, t))) in pop
        .probs()
        .iter()
        .zip(sol.hit_probs.iter().zip(&sol.ttl.timers))
        .enumerate()
    {
        table.push(row![i + 1, p, h, t]);
    }
    Artifact::with_table(
        table,
        json!({
            "mu": sol.mu,
            "iterations": sol.iterations,
            "residual": sol.residual,
            "converged": sol.converged,
        }),
    )
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OgaStepArg {
    /// Diameter over sqrt(T) for the known trace length.
    Horizon,
    /// 1/sqrt(t).
    InvSqrt,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OgaInitArg {
    Empty,
    Uniform,
}

#[derive(Debug, Args, Serialize)]
pub struct OgaArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Cache capacity M.
    #[arg(long)]
    cache: usize,
    /// Fixed step size.
    #[arg(long, conflicts_with = "step")]
    eta: Option<f64>,
    #[arg(long, value_enum)]
    step: Option<OgaStepArg>,
    /// Per-content weights (content_id, weight); unlisted contents weigh 1.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OgaInitArg::Empty)]
    init: OgaInitArg,
    /// Catalog size; defaults to the largest id seen.
    #[arg(long)]
    catalog: Option<usize>,
}

fn load_weights(path: &Path, n: usize) -> Result<Vec<f64>, CliError> {
    let bad = |msg: String| config(format!("{}: {msg}", path.display()));
    let f = File::open(path).map_err(|e| bad(e.to_string()))?;
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(f);
    let mut w = vec![1.0; n];
    for rec in rd.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id: usize = rec
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad(format!("line {line}: bad content_id")))?;
        let x: f64 = rec
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad(format!("line {line}: bad weight")))?;
        if id == 0 || id > n {
            return Err(bad(format!("line {line}: content {id} outside 1..={n}")));
        }
        w[id - 1] = x;
    }
    Ok(w)
}

pub fn oga(a: &OgaArgs) -> Result<Artifact, CliError> {
    let trace = load_trace(&a.trace)?;
    let ids = trace.contents();
    let n = a.catalog.unwrap_or(trace.max_content());
    if trace.max_content() > n {
        return Err(config(format!("trace requests content {} beyond --catalog {n}", trace.max_content())));
    }
    let w = match &a.weights {
        Some(p) => load_weights(p, n)?,
        None => vec![1.0; n],
    };
    let step = match (a.eta, a.step) {
        (Some(eta), _) => StepSize::Fixed(eta),
        (None, Some(OgaStepArg::InvSqrt)) => StepSize::InvSqrt,
        (None, _) => StepSize::HorizonOptimal,
    };
    let init = match a.init {
        OgaInitArg::Empty => OgaInit::Empty,
        OgaInitArg::Uniform => OgaInit::Uniform,
    };
    let r = run_oga_from(&ids, &w, a.cache, step, init)?;
    let mut table = Table::new(&["slot", "u_policy", "u_hindsight_cum", "regret"]);
    for t in 0..r.utility.len() {
        table.push(row![t + 1, r.utility[t], r.hindsight_cum[t], r.regret[t]]);
    }
    let t = ids.len();
    let wmax = w.iter().cloned().fold(0.0, f64::max);
    Artifact::with_table(
        table,
        json!({
            "slots": t,
            "catalog": n,
            "cache": a.cache,
            "total_utility": r.total_utility,
            "hindsight_utility": r.hindsight_utility,
            "final_regret": r.final_regret,
            "horizon_optimal_regret_bound": wmax * diameter(a.cache, n) * (t as f64).sqrt(),
        }),
    )
}

#[derive(Debug, Args, Serialize)]
pub struct FemtoArgs {
    /// Network JSON; without it a random instance is drawn.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Users of the random instance.
    #[arg(long, default_value_t = 4)]
    users: usize,
    /// Small-cell capacities of the random instance.
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 2, 2])]
    caches: Vec<usize>,
    /// Files of the random instance.
    #[arg(long, default_value_t = 5)]
    files: usize,
    /// Link probability of the random instance.
    #[arg(long, default_value_t = 0.6)]
    p_link: f64,
    /// Also compute the optimum by enumeration.
    #[arg(long)]
    exact: bool,
}

pub fn femto(a: &FemtoArgs, ctx: &Ctx) -> Result<Artifact, CliError> {
    let inst = match &a.network {
        Some(p) => {
            let f = File::open(p).map_err(|e| config(format!("cannot read {}: {e}", p.display())))?;
            let spec: NetworkSpec =
                serde_json::from_reader(f).map_err(|e| config(format!("{}: {e}", p.display())))?;
            spec.build()?
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed("random femtocaching instances")?);
            let (net, demand) = random_femto_instance(a.users, &a.caches, a.files, a.p_link, &mut rng)?;
            FemtoInstance {
                net,
                demand,
                cache_ids: (1..=a.caches.len() as u64).collect(),
            }
        }
    };
    let pl = femto_greedy(&inst.net, &inst.demand)?;
    let value = femto_objective(&inst.net, &inst.demand, &pl)?;
    let mut out = json!({ "placement": inst.export(&pl), "objective": value });
    if a.exact {
        let (best, opt) = exhaustive_placement_opt(inst.net.capacities(), inst.demand.n_files(), |p| {
            femto_objective(&inst.net, &inst.demand, p)
        })?;
        out["optimum"] = json!(opt);
        out["optimal_placement"] = json!(inst.export(&best));
        out["ratio"] = json!(if opt > 0.0 { value / opt } else { 1.0 });
    }
    Artifact::json(out)
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HierAlgo {
    /// Randomized local search on routing savings.
    Local,
    /// Greedy on the number of requests served inside the hierarchy.
    Greedy,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwapRuleArg {
    Local,
    Generalized,
}

#[derive(Debug, Args, Serialize)]
pub struct HierArgs {
    #[arg(long, value_enum, default_value_t = HierAlgo::Local)]
    algo: HierAlgo,
    /// Number of leaf caches.
    #[arg(long, default_value_t = 3)]
    leaves: usize,
    /// Leaf capacity.
    #[arg(long, default_value_t = 2)]
    b: usize,
    /// Parent capacity.
    #[arg(long, default_value_t = 1)]
    b0: usize,
    /// Leaf-to-parent cost.
    #[arg(long, default_value_t = 1.0)]
    d: f64,
    /// Parent-to-origin cost.
    #[arg(long, default_value_t = 4.0)]
    d0: f64,
    /// Leaf-to-leaf cost.
    #[arg(long, default_value_t = 2.0)]
    d_prime: f64,
    #[arg(long, default_value_t = 10)]
    files: usize,
    /// Zipf exponent of the per-leaf demand.
    #[arg(long, default_value_t = 0.8)]
    tau: f64,
    #[arg(long, value_enum, default_value_t = SwapRuleArg::Local)]
    rule: SwapRuleArg,
}

fn export_tree(pl: &Placement) -> BTreeMap<String, Vec<usize>> {
    pl.sets
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let name = if i == 0 { "parent".to_string() } else { format!("leaf{i}") };
            (name, s.iter().map(|n| n + 1).collect())
        })
        .collect()
}

pub fn hier(a: &HierArgs, ctx: &Ctx) -> Result<Artifact, CliError> {
    let net = TreeNet::symmetric(a.leaves, a.b, a.b0, a.d0, a.d, a.d_prime, a.files)?;
    let rates = zipf(a.tau, a.files as u64)?.probs().to_vec();
    let demand = DemandMatrix::homogeneous(a.leaves, &rates)?;
    match a.algo {
        HierAlgo::Local => {
            let rule = match a.rule {
                SwapRuleArg::Local => SwapRule::Local,
                SwapRuleArg::Generalized => SwapRule::Generalized,
            };
            let r = hierarchical_local_search(&net, &demand, None, ctx.seed("local search")?, rule)?;
            let bound = symmetric_knapsack_bound(&net, &demand).ok();
            Artifact::json(json!({
                "placement": export_tree(&r.placement),
                "savings": r.value,
                "upper_bound": bound,
                "proposals": r.proposals,
                "swaps": r.swaps,
                "converged": r.converged,
            }))
        }
        HierAlgo::Greedy => {
            let pl = hierarchical_greedy(&net, &demand)?;
            Artifact::json(json!({
                "placement": export_tree(&pl),
                "served": served_requests(&net, &demand, &pl)?,
                "savings": routing_savings(&net, &demand, &pl)?,
            }))
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BscaStepArg {
    Horizon,
    InvSqrt,
    Doubling,
}

#[derive(Debug, Args, Serialize)]
pub struct BscaArgs {
    /// Located trace; without it an IRM trace is drawn.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    files: usize,
    /// Capacity of each of the three caches.
    #[arg(long, default_value_t = 10)]
    b: usize,
    #[arg(long, default_value_t = 0.8)]
    tau: f64,
    #[arg(long, default_value_t = 50_000)]
    length: usize,
    /// Fixed step size.
    #[arg(long, conflicts_with = "step")]
    eta: Option<f64>,
    #[arg(long, value_enum)]
    step: Option<BscaStepArg>,
    /// Table resolution in slots.
    #[arg(long, default_value_t = 500)]
    every: usize,
}

pub struct BscaRun {
    pub bsca: Vec<f64>,
    pub mlru: Vec<f64>,
    pub lazy: Vec<f64>,
    pub hindsight_cum: Vec<f64>,
    pub final_regret: f64,
    pub bound: f64,
}

pub fn bsca_run(trace: &Trace, files: usize, b: usize, step: BscaStep) -> Result<BscaRun, CliError> {
    let net = example_network(files, b)?;
    let cfg = BscaConfig {
        step: Some(step),
        prefetch_costs: None,
    };
    let r = run_bsca(trace, &net, &cfg)?;
    Ok(BscaRun {
        mlru: mlru_utilities(trace, &net)?,
        lazy: lazy_lru_utilities(trace, &net)?,
        bsca: r.utility,
        hindsight_cum: r.hindsight_cum,
        final_regret: r.final_regret,
        bound: net.regret_bound(trace.len()),
    })
}

/// Running time averages sampled every `every` slots and at the end.
pub fn averages(u: &[f64], every: usize) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let mut acc = 0.0;
    for (t, x) in u.iter().enumerate() {
        acc += x;
        let slot = t + 1;
        if slot % every == 0 || slot == u.len() {
            out.push((slot, acc / slot as f64));
        }
    }
    out
}

pub fn bsca(a: &BscaArgs, ctx: &Ctx) -> Result<Artifact, CliError> {
    if a.every == 0 {
        return Err(config("--every must be positive"));
    }
    let trace = match &a.trace {
        Some(p) => load_trace(p)?,
        None => gen_irm_located(&zipf(a.tau, a.files as u64)?, a.length, 4, ctx.seed("generated traces")?)?,
    };
    let step = match (a.eta, a.step) {
        (Some(eta), _) => BscaStep::Fixed(eta),
        (None, Some(BscaStepArg::InvSqrt)) => BscaStep::InvSqrt,
        (None, Some(BscaStepArg::Doubling)) => BscaStep::Doubling,
        (None, _) => BscaStep::HorizonOptimal,
    };
    let r = bsca_run(&trace, a.files, a.b, step)?;
    let mut table = Table::new(&["slot", "bsca", "mlru", "lazy_lru", "hindsight"]);
    let (b, m, l) = (averages(&r.bsca, a.every), averages(&r.mlru, a.every), averages(&r.lazy, a.every));
    for i in 0..b.len() {
        let slot = b[i].0;
        table.push(row![slot, b[i].1, m[i].1, l[i].1, r.hindsight_cum[slot - 1] / slot as f64]);
    }
    let t = trace.len() as f64;
    let last = |v: &[(usize, f64)]| v.last().map_or(0.0, |x| x.1);
    Artifact::with_table(
        table,
        json!({
            "slots": trace.len(),
            "bsca_avg": last(&b),
            "mlru_avg": last(&m),
            "lazy_lru_avg": last(&l),
            "hindsight_avg": r.hindsight_cum.last().copied().unwrap_or(0.0) / t,
            "final_regret": r.final_regret,
            "regret_bound": r.bound,
        }),
    )
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeArg {
    /// K grows first, then N; sizes are catalog sizes.
    #[value(alias = "fixedK")]
    KFirst,
    /// N = MK/2; sizes are node counts.
    Proportional,
    /// N = MK - 1; sizes are node counts.
    Saturated,
    /// Fixed K, M = 2 ceil(N/K); sizes are catalog sizes.
    HighM,
    /// Fixed K, M = ceil(N/K) + 1; sizes are catalog sizes.
    LowM,
}

#[derive(Debug, Args, Serialize)]
pub struct GridlawsArgs {
    #[arg(long)]
    tau: f64,
    #[arg(long, value_enum)]
    regime: RegimeArg,
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<u64>,
    /// Cache size per node (k-first, proportional, saturated).
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Node count (high-m, low-m).
    #[arg(long, default_value_t = 1024)]
    k: u64,
}

pub fn regime(r: RegimeArg, m: usize, k: u64) -> Regime {
    match r {
        RegimeArg::KFirst => Regime::KFirst { m },
        RegimeArg::Proportional => Regime::Proportional { m },
        RegimeArg::Saturated => Regime::Saturated { m },
        RegimeArg::HighM => Regime::HighM { k },
        RegimeArg::LowM => Regime::LowM { k },
    }
}

pub fn gridlaws(a: &GridlawsArgs) -> Result<Artifact, CliError> {
    let t = scaling_experiment(regime(a.regime, a.m, a.k), a.tau, &a.sizes)?;
    let mut table = Table::new(&["K", "N", "M", "C", "l", "r"]);
    for r in &t.rows {
        table.push(row![r.k, r.n, r.m, r.c, r.l, r.r]);
    }
    Artifact::with_table(
        table,
        json!({
            "regime": t.regime,
            "tau": t.tau,
            "slope": t.slope,
            "r_squared": t.r_squared,
            "expected_slope": t.expected_slope,
        }),
    )
}
