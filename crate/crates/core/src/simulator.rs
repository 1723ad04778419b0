//! Discrete-event fork-join simulation via per-server Lindley recursions.
//!
//! In the default `per_run` mode a job population uses a fixed number of
//! servers `s` for the whole run; the strategy is handled by stratifying over
//! its support and weighting each stratum by `f_S(s)`. The `per_job` mode
//! redraws `S` for every job. It is offered for exploration only: the bounds
//! are not derived for it.
//!
//! Random streams are keyed by purpose, server index and replication, never
//! by stratum, so every stratum of a replication sees the same arrivals and
//! base service draws (common random numbers).

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::Metric;
use crate::distributions::DistributionSpec;
use crate::error::{FjError, Result};
use crate::rng::{stream_id, stream_rng, SimRng};
use crate::strategies::StrategySpec;
use crate::system::{FJSystemSpec, HierarchicalRateModel};

/// Horizon used in place of `n_jobs` when a stratum is unstable.
pub const UNSTABLE_HORIZON: usize = 100_000;
pub const REPORT_PERCENTILES: [f64; 4] = [0.5, 0.9, 0.99, 0.999];
const SAMPLE_MAGIC: &[u8; 8] = b"FJSAMP01";

const STREAM_ARRIVAL: u8 = 1;
const STREAM_SERVICE: u8 = 2;
const STREAM_PARTICIPATION: u8 = 3;
const STREAM_RATES: u8 = 4;
const STREAM_STRATEGY: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum StrategyMode {
    /// Draw S once per run; stratified over the support.
    #[default]
    PerRun,
    /// Redraw S for every job.
    PerJob,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub system: FJSystemSpec,
    /// Without a strategy every job forks onto all servers, unscaled.
    pub strategy: Option<StrategySpec>,
    /// Exponential service rates drawn once per replication; overrides the
    /// servers' own service distributions.
    pub rate_model: Option<HierarchicalRateModel>,
    pub mode: StrategyMode,
    /// Jobs per replication and stratum, warmup included.
    pub n_jobs: usize,
    /// Defaults to 10% of `n_jobs`, at least 1000, at most half of `n_jobs`.
    pub warmup: Option<usize>,
    pub replications: usize,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn new(system: FJSystemSpec, strategy: Option<StrategySpec>, n_jobs: usize, replications: usize, seed: u64) -> Self {
        Self { system, strategy, rate_model: None, mode: StrategyMode::PerRun, n_jobs, warmup: None, replications, seed }
    }

    pub fn with_rate_model(mut self, model: HierarchicalRateModel) -> Self {
        self.rate_model = Some(model);
        self
    }

    pub fn with_mode(mut self, mode: StrategyMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_warmup(mut self, warmup: usize) -> Self {
        self.warmup = Some(warmup);
        self
    }

    pub fn effective_warmup(&self) -> usize {
        self.warmup.unwrap_or_else(|| (self.n_jobs / 10).max(1000).min(self.n_jobs / 2))
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.replications == 0 {
            return Err(FjError::Config("at least one replication is required".into()));
        }
        if self.n_jobs <= self.effective_warmup() {
            return Err(FjError::Config(format!(
                "n_jobs ({}) must exceed the warmup ({})",
                self.n_jobs,
                self.effective_warmup()
            )));
        }
        if let Some(st) = &self.strategy {
            st.validate()?;
            if st.n() != self.system.n() {
                return Err(FjError::Config(format!(
                    "strategy covers {} servers but the system has {}",
                    st.n(),
                    self.system.n()
                )));
            }
        }
        if let Some(model) = &self.rate_model {
            if self.strategy.is_none() {
                return Err(FjError::Config("a rate model requires a scheduling strategy".into()));
            }
            model.validate(1.0 / self.system.arrival.mean())?;
        }
        Ok(())
    }

    /// (server count, weight) per stratum.
    fn strata(&self) -> Vec<(usize, f64)> {
        match (&self.strategy, self.mode) {
            (Some(st), StrategyMode::PerRun) => st.support(),
            _ => vec![(self.system.n(), 1.0)],
        }
    }
}

/// Post-warmup samples of one replication, in job order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JobTrace {
    pub waiting: Vec<f64>,
    pub response: Vec<f64>,
    /// Largest scaled task service time of each job over its participating servers.
    pub max_service: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSamples {
    /// Sorted ascending.
    pub waiting: Vec<f64>,
    /// Sorted ascending.
    pub response: Vec<f64>,
}

impl ReplicationSamples {
    fn get(&self, metric: Metric) -> &[f64] {
        match metric {
            Metric::Waiting => &self.waiting,
            Metric::Response => &self.response,
        }
    }

    fn len(&self) -> usize {
        self.waiting.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stratum {
    /// Servers per job; in `per_job` mode this is N.
    pub servers: usize,
    pub weight: f64,
    pub replications: Vec<ReplicationSamples>,
    pub unstable: bool,
}

impl Stratum {
    fn sample_count(&self) -> usize {
        self.replications.iter().map(ReplicationSamples::len).sum()
    }

    fn fraction_at_least(&self, rep: usize, metric: Metric, sigma: f64) -> f64 {
        let xs = self.replications[rep].get(metric);
        count_at_least(xs, sigma) as f64 / xs.len() as f64
    }
}

fn count_at_least(sorted: &[f64], sigma: f64) -> usize {
    sorted.len() - sorted.partition_point(|&x| x < sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub seed: u64,
    pub mode: StrategyMode,
    pub n_jobs: usize,
    pub warmup: usize,
    pub strata: Vec<Stratum>,
    pub warnings: Vec<String>,
}

impl SimulationResult {
    pub fn replications(&self) -> usize {
        self.strata.first().map_or(0, |s| s.replications.len())
    }

    pub fn total_samples(&self) -> usize {
        self.strata.iter().map(Stratum::sample_count).sum()
    }

    pub fn horizon_capped(&self) -> bool {
        self.strata.iter().any(|s| s.unstable)
    }

    /// Kish effective sample size of the stratum weights.
    pub fn effective_sample_size(&self) -> f64 {
        let denom: f64 = self
            .strata
            .iter()
            .map(|s| s.weight * s.weight / s.sample_count() as f64)
            .sum();
        1.0 / denom
    }

    /// Weighted P(X ≥ σ). The standard error is the larger of the pooled binomial
    /// error and the spread of the per-replication estimates.
    pub fn ccdf(&self, metric: Metric, sigma: f64) -> Result<Estimate> {
        if self.total_samples() == 0 {
            return Err(FjError::Empty);
        }
        let reps = self.replications();
        let per_rep: Vec<f64> = (0..reps)
            .map(|r| self.strata.iter().map(|s| s.weight * s.fraction_at_least(r, metric, sigma)).sum())
            .collect();
        let mut value = 0.0;
        let mut binomial_var = 0.0;
        for s in &self.strata {
            let n = s.sample_count() as f64;
            let count: usize = s.replications.iter().map(|r| count_at_least(r.get(metric), sigma)).sum();
            let p = count as f64 / n;
            value += s.weight * p;
            binomial_var += s.weight * s.weight * p * (1.0 - p) / n;
        }
        let std_error = binomial_var.sqrt().max(between_replication_se(&per_rep));
        Ok(Estimate { value, std_error })
    }

    pub fn mean(&self, metric: Metric) -> Result<Estimate> {
        if self.total_samples() == 0 {
            return Err(FjError::Empty);
        }
        let rep_mean = |s: &Stratum, r: usize| {
            let xs = s.replications[r].get(metric);
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        let per_rep: Vec<f64> = (0..self.replications())
            .map(|r| self.strata.iter().map(|s| s.weight * rep_mean(s, r)).sum())
            .collect();
        let value = per_rep.iter().sum::<f64>() / per_rep.len() as f64;
        let mut iid_var = 0.0;
        for s in &self.strata {
            let all = s.replications.iter().flat_map(|r| r.get(metric).iter().copied());
            let n = s.sample_count() as f64;
            let m = s.replications.iter().map(|r| r.get(metric).iter().sum::<f64>()).sum::<f64>() / n;
            let var = all.map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
            iid_var += s.weight * s.weight * var / n;
        }
        let std_error = iid_var.sqrt().max(between_replication_se(&per_rep));
        Ok(Estimate { value, std_error })
    }

    /// Weighted nearest-rank percentiles of the pooled samples, `qs` in (0, 1].
    pub fn percentiles(&self, metric: Metric, qs: &[f64]) -> Result<Vec<f64>> {
        let reps: Vec<usize> = (0..self.replications()).collect();
        self.percentiles_over(metric, qs, &reps)
    }

    /// Percentiles computed separately for each replication.
    pub fn percentiles_per_replication(&self, metric: Metric, qs: &[f64]) -> Result<Vec<Vec<f64>>> {
        (0..self.replications()).map(|r| self.percentiles_over(metric, qs, &[r])).collect()
    }

    fn percentiles_over(&self, metric: Metric, qs: &[f64], reps: &[usize]) -> Result<Vec<f64>> {
        let mut pooled: Vec<(f64, f64)> = Vec::new();
        for s in &self.strata {
            let n: usize = reps.iter().map(|&r| s.replications[r].len()).sum();
            if n == 0 {
                continue;
            }
            let w = s.weight / n as f64;
            for &r in reps {
                pooled.extend(s.replications[r].get(metric).iter().map(|&x| (x, w)));
            }
        }
        if pooled.is_empty() {
            return Err(FjError::Empty);
        }
        pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pooled.iter().map(|p| p.1).sum();
        qs.iter()
            .map(|&q| {
                if !(q > 0.0 && q <= 1.0) {
                    return Err(FjError::invalid(format!("percentile level must lie in (0, 1], got {q}")));
                }
                let target = q * total;
                let mut acc = 0.0;
                for &(x, w) in &pooled {
                    acc += w;
                    // Relative slack absorbs rounding in the running sum.
                    if acc >= target * (1.0 - 1e-12) {
                        return Ok(x);
                    }
                }
                Ok(pooled[pooled.len() - 1].0)
            })
            .collect()
    }

    /// Writes every stratum and replication as little-endian binary columns:
    /// magic, stratum count, then per block `u32 servers, u32 replication,
    /// f64 weight, u64 n, n waiting f64, n response f64`.
    pub fn write_samples(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(SAMPLE_MAGIC)?;
        let blocks: usize = self.strata.iter().map(|s| s.replications.len()).sum();
        out.write_all(&(blocks as u64).to_le_bytes())?;
        for s in &self.strata {
            for (r, rep) in s.replications.iter().enumerate() {
                out.write_all(&(s.servers as u32).to_le_bytes())?;
                out.write_all(&(r as u32).to_le_bytes())?;
                out.write_all(&s.weight.to_le_bytes())?;
                out.write_all(&(rep.len() as u64).to_le_bytes())?;
                for x in rep.waiting.iter().chain(&rep.response) {
                    out.write_all(&x.to_le_bytes())?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn between_replication_se(per_rep: &[f64]) -> f64 {
    let r = per_rep.len();
    if r < 2 {
        return 0.0;
    }
    let m = per_rep.iter().sum::<f64>() / r as f64;
    let var = per_rep.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (r - 1) as f64;
    (var / r as f64).sqrt()
}

/// P(X ≥ σ) with a binomial standard error, for pooled unweighted samples.
pub fn empirical_ccdf(samples: &[f64], sigma: f64) -> Result<Estimate> {
    if samples.is_empty() {
        return Err(FjError::Empty);
    }
    let n = samples.len() as f64;
    let p = samples.iter().filter(|&&x| x >= sigma).count() as f64 / n;
    Ok(Estimate { value: p, std_error: (p * (1.0 - p) / n).sqrt() })
}

/// Service distributions of one replication.
fn replication_services(config: &SimulationConfig, replication: u32) -> Vec<DistributionSpec> {
    match &config.rate_model {
        Some(model) => {
            let mut rng = stream_rng(config.seed, stream_id(STREAM_RATES, 0, replication));
            (0..config.system.n())
                .map(|_| DistributionSpec::Exponential { rate: model.sample_rate(&mut rng) })
                .collect()
        }
        None => config.system.servers.iter().map(|s| s.service).collect(),
    }
}

/// Servers loaded beyond the arrival rate, given the stratum's server count.
fn unstable_servers(config: &SimulationConfig, services: &[DistributionSpec], servers: usize) -> Vec<usize> {
    let mean_gap = config.system.arrival.mean();
    let phi = config.system.phi;
    let load = |n: usize| -> f64 {
        let pi = config.system.servers[n].pi;
        let base = services[n].mean() * pi;
        match (&config.strategy, config.mode) {
            (None, _) => base,
            (Some(_), StrategyMode::PerRun) => base / (servers as f64).powf(phi),
            (Some(st), StrategyMode::PerJob) => st
                .support()
                .into_iter()
                .filter(|(s, _)| *s > n)
                .map(|(s, m)| m * base / (s as f64).powf(phi))
                .sum(),
        }
    };
    (0..servers).filter(|&n| load(n) >= mean_gap).collect()
}

/// Runs one replication of one stratum and returns its post-warmup samples in job order.
///
/// `servers` is the stratum's server count (ignored in `per_job` mode, where
/// every job draws its own).
pub fn run_replication(config: &SimulationConfig, servers: usize, replication: u32, n_jobs: usize, warmup: usize) -> JobTrace {
    let services = replication_services(config, replication);
    run_with_services(config, &services, servers, replication, n_jobs, warmup)
}

fn run_with_services(
    config: &SimulationConfig,
    services: &[DistributionSpec],
    servers: usize,
    replication: u32,
    n_jobs: usize,
    warmup: usize,
) -> JobTrace {
    let seed = config.seed;
    let per_job = config.mode == StrategyMode::PerJob && config.strategy.is_some();
    let width = if per_job { config.system.n() } else { servers };
    let mut arrivals = stream_rng(seed, stream_id(STREAM_ARRIVAL, 0, replication));
    let mut service_rngs: Vec<SimRng> =
        (0..width).map(|n| stream_rng(seed, stream_id(STREAM_SERVICE, n as u32, replication))).collect();
    let mut participation_rngs: Vec<SimRng> =
        (0..width).map(|n| stream_rng(seed, stream_id(STREAM_PARTICIPATION, n as u32, replication))).collect();
    let mut strategy_rng = stream_rng(seed, stream_id(STREAM_STRATEGY, 0, replication));
    let pis: Vec<f64> = config.system.servers[..width].iter().map(|s| s.pi).collect();
    let phi = config.system.phi;
    let fixed_divisor = if config.strategy.is_some() { (servers as f64).powf(phi) } else { 1.0 };
    let pmf_strategy = config.strategy.as_ref().filter(|_| per_job);

    let kept = n_jobs.saturating_sub(warmup);
    let mut trace = JobTrace {
        waiting: Vec::with_capacity(kept),
        response: Vec::with_capacity(kept),
        max_service: Vec::with_capacity(kept),
    };
    let mut backlog = vec![0.0f64; width];
    let mut work = vec![0.0f64; width];
    for j in 0..n_jobs {
        let (used, divisor) = match pmf_strategy {
            Some(st) => {
                let s = st.sample(&mut strategy_rng);
                (s, (s as f64).powf(phi))
            }
            None => (width, fixed_divisor),
        };
        let (mut w_job, mut r_job, mut x_max) = (0.0f64, 0.0f64, 0.0f64);
        for n in 0..width {
            // Draws happen for every server so streams stay aligned across configurations.
            let x = services[n].sample(&mut service_rngs[n]) / divisor;
            let joins = pis[n] >= 1.0 || participation_rngs[n].random::<f64>() < pis[n];
            if joins && n < used {
                work[n] = x;
                w_job = w_job.max(backlog[n]);
                r_job = r_job.max(backlog[n] + x);
                x_max = x_max.max(x);
            } else {
                work[n] = 0.0;
            }
        }
        let t = config.system.arrival.sample(&mut arrivals);
        for n in 0..width {
            backlog[n] = (backlog[n] + work[n] - t).max(0.0);
        }
        if j >= warmup {
            trace.waiting.push(w_job);
            trace.response.push(r_job);
            trace.max_service.push(x_max);
        }
    }
    trace
}

/// Runs every stratum and replication in parallel and pools the results.
pub fn simulate(config: &SimulationConfig) -> Result<SimulationResult> {
    config.validate()?;
    let strata = config.strata();
    let warmup = config.effective_warmup();
    let reps = config.replications;

    let mut warnings = Vec::new();
    let mut plans = Vec::with_capacity(strata.len());
    for &(servers, weight) in &strata {
        let unstable = (0..reps as u32).any(|r| {
            let services = replication_services(config, r);
            !unstable_servers(config, &services, servers).is_empty()
        });
        let (n_jobs, warm) = if unstable && config.n_jobs > UNSTABLE_HORIZON {
            (UNSTABLE_HORIZON, (warmup * UNSTABLE_HORIZON / config.n_jobs).min(UNSTABLE_HORIZON / 2))
        } else {
            (config.n_jobs, warmup)
        };
        if unstable {
            warnings.push(format!(
                "stratum with {servers} servers is unstable; horizon capped at {n_jobs} jobs, samples do not describe a steady state"
            ));
        }
        plans.push((servers, weight, unstable, n_jobs, warm));
    }

    let tasks: Vec<(usize, u32)> = (0..plans.len()).flat_map(|i| (0..reps as u32).map(move |r| (i, r))).collect();
    let samples: Vec<ReplicationSamples> = tasks
        .par_iter()
        .map(|&(i, r)| {
            let (servers, _, _, n_jobs, warm) = plans[i];
            let trace = run_replication(config, servers, r, n_jobs, warm);
            let (mut waiting, mut response) = (trace.waiting, trace.response);
            waiting.sort_by(f64::total_cmp);
            response.sort_by(f64::total_cmp);
            ReplicationSamples { waiting, response }
        })
        .collect();

    let mut iter = samples.into_iter();
    let strata = plans
        .iter()
        .map(|&(servers, weight, unstable, _, _)| Stratum {
            servers,
            weight,
            replications: iter.by_ref().take(reps).collect(),
            unstable,
        })
        .collect();
    Ok(SimulationResult { seed: config.seed, mode: config.mode, n_jobs: config.n_jobs, warmup, strata, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub slope: f64,
    pub intercept: f64,
    /// `None` when every x is the same.
    pub r_squared: Option<f64>,
    pub degenerate: bool,
}

/// Least-squares fit of `y` against `ln x`.
pub fn fit_log_growth(points: &[(f64, f64)]) -> Result<GrowthFit> {
    if points.is_empty() {
        return Err(FjError::Empty);
    }
    if let Some(&(x, _)) = points.iter().find(|(x, _)| !(*x > 0.0)) {
        return Err(FjError::invalid(format!("growth fit needs positive x, got {x}")));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(points).map(|(x, p)| (x - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx <= 1e-300 {
        return Ok(GrowthFit { slope: 0.0, intercept: my, r_squared: None, degenerate: true });
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { Some(sxy * sxy / (sxx * syy)) } else { Some(1.0) };
    Ok(GrowthFit { slope, intercept: my - slope * mx, r_squared, degenerate: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum GrowthAxis {
    ServerCount,
    ExpectedServers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub axis: GrowthAxis,
    pub level: f64,
    /// (x, percentile) per configuration.
    pub points: Vec<(f64, f64)>,
    pub fit: GrowthFit,
}

/// Simulates every configuration, takes the waiting-time percentile at `level`
/// and fits it against the log of N or of E[S].
pub fn percentile_growth_fit(configs: &[SimulationConfig], axis: GrowthAxis, level: f64) -> Result<GrowthReport> {
    let points = configs
        .iter()
        .map(|c| {
            let x = match (axis, &c.strategy) {
                (GrowthAxis::ExpectedServers, Some(st)) => st.expected_servers(),
                _ => c.system.n() as f64,
            };
            let y = simulate(c)?.percentiles(Metric::Waiting, &[level])?[0];
            Ok((x, y))
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_log_growth(&points)?;
    Ok(GrowthReport { axis, level, points, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::ServerSpec;

    fn exp(rate: f64) -> DistributionSpec {
        DistributionSpec::exponential(rate).unwrap()
    }

    fn mm1(mu: f64, lambda: f64, n_jobs: usize, reps: usize, seed: u64) -> SimulationConfig {
        let sys = FJSystemSpec::homogeneous(1, exp(mu), exp(lambda), 1.0).unwrap();
        SimulationConfig::new(sys, None, n_jobs, reps, seed)
    }

    #[test]
    fn mm1_mean_waiting() {
        let (mu, lambda) = (1.0, 0.5);
        let res = simulate(&mm1(mu, lambda, 200_000, 8, 3)).unwrap();
        let mean = res.mean(Metric::Waiting).unwrap();
        let exact = (lambda / mu) / (mu - lambda);
        assert!((mean.value - exact).abs() < 3.0 * mean.std_error, "{mean:?} vs {exact}");
        let resp = res.mean(Metric::Response).unwrap();
        assert!((resp.value - 1.0 / (mu - lambda)).abs() < 3.0 * resp.std_error);
    }

    #[test]
    fn mm1_ccdf_below_bound() {
        let res = simulate(&mm1(1.0, 0.9, 300_000, 8, 5)).unwrap();
        for sigma in [0.0, 5.0, 10.0, 20.0, 40.0] {
            let e = res.ccdf(Metric::Waiting, sigma).unwrap();
            assert!(e.value <= (-0.1 * sigma).exp() + 3.0 * e.std_error, "sigma {sigma}: {e:?}");
        }
    }

    #[test]
    fn ccdf_edges_and_two_seeds() {
        let a = simulate(&mm1(1.0, 0.5, 50_000, 4, 1)).unwrap();
        assert_eq!(a.ccdf(Metric::Response, 0.0).unwrap().value, 1.0);
        assert_eq!(a.ccdf(Metric::Waiting, 1e9).unwrap().value, 0.0);
        let b = simulate(&mm1(1.0, 0.5, 50_000, 4, 2)).unwrap();
        for sigma in [0.5, 1.0, 2.0, 4.0] {
            let (x, y) = (a.ccdf(Metric::Waiting, sigma).unwrap(), b.ccdf(Metric::Waiting, sigma).unwrap());
            let combined = (x.std_error.powi(2) + y.std_error.powi(2)).sqrt();
            assert!((x.value - y.value).abs() <= 4.0 * combined);
        }
        assert!(matches!(empirical_ccdf(&[], 1.0), Err(FjError::Empty)));
        let e = empirical_ccdf(&[1.0, 2.0, 3.0, 4.0], 2.0).unwrap();
        assert_eq!(e.value, 0.75);
    }

    #[test]
    fn ccdf_is_non_increasing() {
        let res = simulate(&mm1(1.0, 0.7, 20_000, 2, 9)).unwrap();
        let vals: Vec<f64> = (0..100).map(|i| res.ccdf(Metric::Waiting, i as f64 * 0.2).unwrap().value).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_work_gives_zero_delays() {
        let sys = FJSystemSpec::new(vec![ServerSpec::new(exp(1.0), 0.0); 3], exp(0.5), 1.0).unwrap();
        let trace = run_replication(&SimulationConfig::new(sys, None, 5_000, 1, 4), 3, 0, 5_000, 0);
        assert!(trace.waiting.iter().chain(&trace.response).all(|&x| x == 0.0));
    }

    #[test]
    fn per_job_invariants() {
        let sys = FJSystemSpec::new(
            vec![ServerSpec::always(exp(1.5)), ServerSpec::always(exp(1.25)), ServerSpec::new(exp(1.0), 0.6)],
            exp(0.5),
            1.0,
        )
        .unwrap();
        let cfg = SimulationConfig::new(sys, None, 20_000, 1, 12);
        let t = run_replication(&cfg, 3, 0, 20_000, 0);
        for j in 0..t.waiting.len() {
            assert!(t.waiting[j] >= 0.0);
            assert!(t.waiting[j] <= t.response[j]);
            assert!(t.response[j] - t.waiting[j] <= t.max_service[j] + 1e-12);
        }
    }

    #[test]
    fn single_server_response_gap_is_own_service() {
        let t = run_replication(&mm1(1.0, 0.6, 5_000, 1, 2), 1, 0, 5_000, 0);
        for j in 0..t.waiting.len() {
            assert!((t.response[j] - t.waiting[j] - t.max_service[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn removing_a_server_never_increases_waiting() {
        let rates = [1.5, 1.25, 1.0];
        let full = FJSystemSpec::new(rates.iter().map(|&r| ServerSpec::always(exp(r))).collect(), exp(0.5), 1.0).unwrap();
        let fewer = FJSystemSpec::new(rates[..2].iter().map(|&r| ServerSpec::always(exp(r))).collect(), exp(0.5), 1.0).unwrap();
        let a = run_replication(&SimulationConfig::new(full, None, 10_000, 1, 6), 3, 0, 10_000, 0);
        let b = run_replication(&SimulationConfig::new(fewer, None, 10_000, 1, 6), 2, 0, 10_000, 0);
        assert!(a.waiting.iter().zip(&b.waiting).all(|(x, y)| y <= x));
        assert!(a.waiting.iter().zip(&b.waiting).any(|(x, y)| y < x));
    }

    #[test]
    fn participation_raises_mean_waiting() {
        let mean_for = |pi: f64| {
            let sys = FJSystemSpec::new(
                vec![ServerSpec::always(exp(1.5)), ServerSpec::always(exp(1.25)), ServerSpec::new(exp(1.0), pi)],
                exp(0.5),
                1.0,
            )
            .unwrap();
            simulate(&SimulationConfig::new(sys, None, 100_000, 4, 21)).unwrap().mean(Metric::Waiting).unwrap().value
        };
        let means: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&p| mean_for(p)).collect();
        assert!(means.windows(2).all(|w| w[1] > w[0]), "{means:?}");
    }

    #[test]
    fn determinism_and_thread_independence() {
        let sys = FJSystemSpec::homogeneous(4, exp(1.0), exp(0.9), 0.5).unwrap();
        let cfg = SimulationConfig::new(sys, Some(StrategySpec::binomial(4, 0.5).unwrap()), 20_000, 3, 77);
        let a = simulate(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate(&cfg).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.strata.len(), 4);
        let other = simulate(&SimulationConfig { seed: 78, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn unstable_runs_are_capped() {
        let cfg = mm1(1.0, 1.2, 300_000, 1, 1);
        let res = simulate(&cfg).unwrap();
        assert!(res.horizon_capped());
        assert_eq!(res.warnings.len(), 1);
        assert!(res.total_samples() <= UNSTABLE_HORIZON);
    }

    #[test]
    fn config_errors() {
        let mut cfg = mm1(1.0, 0.5, 1_000, 1, 1).with_warmup(1_000);
        assert!(matches!(simulate(&cfg), Err(FjError::Config(_))));
        cfg.warmup = None;
        assert_eq!(cfg.effective_warmup(), 500);
        cfg.n_jobs = 10_000;
        cfg.replications = 0;
        assert!(matches!(simulate(&cfg), Err(FjError::Config(_))));
        cfg.replications = 1;
        cfg.strategy = Some(StrategySpec::uniform(3).unwrap());
        assert!(matches!(simulate(&cfg), Err(FjError::Config(_))));
    }

    #[test]
    fn per_job_mode_runs() {
        let sys = FJSystemSpec::homogeneous(5, exp(1.0), exp(0.5), 0.5).unwrap();
        let cfg = SimulationConfig::new(sys, Some(StrategySpec::uniform(5).unwrap()), 20_000, 2, 3)
            .with_mode(StrategyMode::PerJob);
        let res = simulate(&cfg).unwrap();
        assert_eq!(res.strata.len(), 1);
        assert!(res.mean(Metric::Waiting).unwrap().value > 0.0);
    }

    #[test]
    fn weighted_percentiles() {
        let res = SimulationResult {
            seed: 0,
            mode: StrategyMode::PerRun,
            n_jobs: 0,
            warmup: 0,
            strata: vec![
                Stratum {
                    servers: 1,
                    weight: 0.75,
                    replications: vec![ReplicationSamples { waiting: vec![1.0, 2.0], response: vec![1.0, 2.0] }],
                    unstable: false,
                },
                Stratum {
                    servers: 2,
                    weight: 0.25,
                    replications: vec![ReplicationSamples { waiting: vec![10.0], response: vec![10.0] }],
                    unstable: false,
                },
            ],
            warnings: vec![],
        };
        let p = res.percentiles(Metric::Waiting, &[0.3, 0.5, 0.75, 0.8, 1.0]).unwrap();
        assert_eq!(p, vec![1.0, 2.0, 2.0, 10.0, 10.0]);
        let m = res.mean(Metric::Waiting).unwrap();
        assert!((m.value - (0.75 * 1.5 + 0.25 * 10.0)).abs() < 1e-12);
        assert!((res.ccdf(Metric::Waiting, 2.0).unwrap().value - (0.375 + 0.25)).abs() < 1e-12);
        assert!((res.effective_sample_size() - 1.0 / (0.5625 / 2.0 + 0.0625)).abs() < 1e-12);
    }

    #[test]
    fn log_fit() {
        let pts: Vec<(f64, f64)> = [2.0f64, 4.0, 8.0].iter().map(|&x| (x, 3.0 * x.ln() + 1.0)).collect();
        let f = fit_log_growth(&pts).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared.unwrap() - 1.0).abs() < 1e-12);
        let d = fit_log_growth(&[(4.0, 1.0), (4.0, 2.0)]).unwrap();
        assert!(d.degenerate && d.slope == 0.0);
    }

    #[test]
    fn sample_dump_layout() {
        let res = simulate(&mm1(1.0, 0.5, 2_000, 2, 1).with_warmup(1_000)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        res.write_samples(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], SAMPLE_MAGIC);
        assert_eq!(bytes.len(), 8 + 8 + 2 * (4 + 4 + 8 + 8 + 2 * 1_000 * 8));
    }
}
