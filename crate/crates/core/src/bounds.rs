//! Martingale tail bounds on steady-state waiting and response times.
//!
//! Every bound is returned raw: values above 1 are vacuous but still valid,
//! and the reduction identities between the families rely on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decay::{check_stability, decay_rates, DecayRates};
use crate::error::{FjError, Result};
use crate::strategies::{
    binomial_norm, power_series_exp_moment_untruncated, MomentOrder, SeriesCoefficients, StrategySpec,
};
use crate::system::{FJSystemSpec, HierarchicalRateModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Waiting,
    Response,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Waiting => "waiting",
            Metric::Response => "response",
        }
    }
}

/// Waiting and response bound at one σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub waiting: f64,
    pub response: f64,
}

impl BoundPair {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Waiting => self.waiting,
            Metric::Response => self.response,
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(FjError::invalid(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    Ok(())
}

fn require_stable(system: &FJSystemSpec) -> Result<()> {
    if !check_stability(system) {
        return Err(FjError::Stability(
            "some server's mean service time is not below the mean inter-arrival time".into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// General heterogeneous systems, optionally with per-server selection probabilities.

/// Σ_n e^{−θ_n σ} and Σ_n α_n(θ_n) e^{−θ_n σ} for precomputed rates.
pub fn general_bounds_with_rates(system: &FJSystemSpec, rates: &DecayRates, sigma: f64) -> Result<BoundPair> {
    check_sigma(sigma)?;
    let mut waiting = 0.0;
    let mut response = 0.0;
    for (n, theta) in rates.finite() {
        let tail = (-theta * sigma).exp();
        waiting += tail;
        // The tagged job's own service time enters unthinned.
        response += system.servers[n].service.mgf(theta)? * tail;
    }
    Ok(BoundPair { waiting, response })
}

pub fn waiting_bound_general(system: &FJSystemSpec, sigma: f64) -> Result<f64> {
    require_stable(system)?;
    Ok(general_bounds_with_rates(system, &decay_rates(system)?, sigma)?.waiting)
}

pub fn response_bound_general(system: &FJSystemSpec, sigma: f64) -> Result<f64> {
    require_stable(system)?;
    Ok(general_bounds_with_rates(system, &decay_rates(system)?, sigma)?.response)
}

// ---------------------------------------------------------------------------
// Homogeneous exponential servers with service times scaled by s^φ.

fn check_scaled(mu: f64, lambda: f64, strategy: &StrategySpec, phi: f64) -> Result<()> {
    strategy.validate()?;
    if !(mu > 0.0 && lambda > 0.0) {
        return Err(FjError::invalid("service and arrival rates must be > 0"));
    }
    if !(0.0..=1.0).contains(&phi) {
        return Err(FjError::invalid(format!("phi must lie in [0, 1], got {phi}")));
    }
    let s_min = strategy.min_support() as f64;
    if !(s_min.powf(phi) * mu > lambda) {
        return Err(FjError::Stability(format!(
            "smallest scaled service rate {} does not exceed the arrival rate {lambda}",
            s_min.powf(phi) * mu
        )));
    }
    Ok(())
}

fn scaled_moment(mu: f64, lambda: f64, strategy: &StrategySpec, phi: f64, sigma: f64, order: MomentOrder) -> f64 {
    if phi == 1.0 {
        strategy.exp_moment_shifted(mu * sigma, order, lambda * sigma)
    } else {
        strategy.exp_moment_partial_shifted(mu * sigma, phi, order, lambda * sigma)
    }
}

/// e^{λσ}·E[S e^{−μσS^φ}].
pub fn waiting_bound_scaled(mu: f64, lambda: f64, strategy: &StrategySpec, phi: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    check_scaled(mu, lambda, strategy, phi)?;
    Ok(scaled_moment(mu, lambda, strategy, phi, sigma, MomentOrder::First))
}

/// (e^{λσ}/ρ)·E[S² e^{−μσS^φ}] with ρ = λ/μ.
pub fn response_bound_scaled(mu: f64, lambda: f64, strategy: &StrategySpec, phi: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    check_scaled(mu, lambda, strategy, phi)?;
    Ok(mu / lambda * scaled_moment(mu, lambda, strategy, phi, sigma, MomentOrder::Second))
}

/// Linear-scaling waiting bound for a power-series strategy on the full support ℕ:
/// e^{λσ}·κe^{−μσ}ζ′(κe^{−μσ})/ζ(κ).
pub fn waiting_bound_power(
    kappa: f64,
    coefficients: &SeriesCoefficients,
    mu: f64,
    lambda: f64,
    sigma: f64,
) -> Result<f64> {
    check_sigma(sigma)?;
    check_power(mu, lambda)?;
    power_series_exp_moment_untruncated(coefficients, kappa, mu * sigma, MomentOrder::First, lambda * sigma)
}

pub fn response_bound_power(
    kappa: f64,
    coefficients: &SeriesCoefficients,
    mu: f64,
    lambda: f64,
    sigma: f64,
) -> Result<f64> {
    check_sigma(sigma)?;
    check_power(mu, lambda)?;
    Ok(mu / lambda
        * power_series_exp_moment_untruncated(coefficients, kappa, mu * sigma, MomentOrder::Second, lambda * sigma)?)
}

fn check_power(mu: f64, lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && mu > lambda) {
        return Err(FjError::Stability(format!("need 0 < lambda < mu, got lambda={lambda}, mu={mu}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Heterogeneous exponential servers: rates drawn from a hyper-distribution or fixed.

/// Where the per-server service rates come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    Model(HierarchicalRateModel),
    /// Rates of servers 1..N; a job using `s` servers uses the first `s`.
    Fixed(Vec<f64>),
}

impl RateSource {
    pub fn validate(&self, lambda: f64, n: usize) -> Result<()> {
        match self {
            RateSource::Model(m) => m.validate(lambda),
            RateSource::Fixed(rates) => {
                if rates.len() < n {
                    return Err(FjError::invalid(format!("{} rates given for {n} servers", rates.len())));
                }
                if let Some(r) = rates.iter().find(|&&r| !(r > lambda)) {
                    return Err(FjError::Stability(format!("service rate {r} does not exceed lambda={lambda}")));
                }
                Ok(())
            }
        }
    }

    /// E[exp(shift − c·min_{n≤s} μ_n)].
    fn min_laplace(&self, s: usize, c: f64, shift: f64) -> f64 {
        match self {
            RateSource::Model(m) => m.min_rate_laplace_shifted(s, c, shift),
            RateSource::Fixed(rates) => {
                let min = rates[..s].iter().cloned().fold(f64::INFINITY, f64::min);
                (shift - c * min).exp()
            }
        }
    }

    /// E[(Σ_{n≤s} μ_n)·exp(shift − c·min_{n≤s} μ_n)].
    fn sum_min_laplace(&self, s: usize, c: f64, shift: f64) -> f64 {
        match self {
            RateSource::Model(m) => m.rate_sum_min_laplace_shifted(s, c, shift),
            RateSource::Fixed(rates) => {
                let used = &rates[..s];
                let min = used.iter().cloned().fold(f64::INFINITY, f64::min);
                used.iter().sum::<f64>() * (shift - c * min).exp()
            }
        }
    }

    /// Smallest rate available to a job using `s` servers.
    fn min_rate(&self, s: usize) -> f64 {
        match self {
            RateSource::Model(m) => m.min_rate(),
            RateSource::Fixed(rates) => rates[..s].iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Bounds conditional on a job using `s` servers with heterogeneous rates:
/// waiting e^{λσ}·s·E[e^{−σ s^φ Y_s}], response (e^{λσ}/λ)·s^φ·E[(Σ_{n≤s} μ_n) e^{−σ s^φ Y_s}].
pub fn hetero_conditional(rates: &RateSource, s: usize, phi: f64, lambda: f64, sigma: f64) -> BoundPair {
    let scale = (s as f64).powf(phi);
    let c = sigma * scale;
    BoundPair {
        waiting: s as f64 * rates.min_laplace(s, c, lambda * sigma),
        response: scale * rates.sum_min_laplace(s, c, lambda * sigma) / lambda,
    }
}

/// Homogeneous counterpart: waiting s·e^{λσ − μσ s^φ}, response (μ/λ)·s²·e^{λσ − μσ s^φ}.
pub fn scaled_conditional(mu: f64, lambda: f64, s: usize, phi: f64, sigma: f64) -> BoundPair {
    let sf = s as f64;
    let tail = (lambda * sigma - mu * sigma * sf.powf(phi)).exp();
    BoundPair { waiting: sf * tail, response: mu / lambda * sf * sf * tail }
}

/// Heterogeneous bounds: waiting e^{λσ}E[S e^{−Y_S σ S^φ}] and response
/// (e^{λσ}/λ)E[S^φ (Σ_{n≤S} μ_n) e^{−Y_S σ S^φ}], where Y_S is the smallest used rate.
pub fn bounds_hetero_general(
    strategy: &StrategySpec,
    rates: &RateSource,
    phi: f64,
    lambda: f64,
    sigma: f64,
) -> Result<BoundPair> {
    check_sigma(sigma)?;
    strategy.validate()?;
    if !(lambda > 0.0) {
        return Err(FjError::invalid("arrival rate must be > 0"));
    }
    if !(0.0..=1.0).contains(&phi) {
        return Err(FjError::invalid(format!("phi must lie in [0, 1], got {phi}")));
    }
    rates.validate(lambda, strategy.n())?;
    let mut waiting = 0.0;
    let mut response = 0.0;
    for (s, mass) in strategy.support() {
        let b = hetero_conditional(rates, s, phi, lambda, sigma);
        waiting += mass * b.waiting;
        response += mass * b.response;
    }
    Ok(BoundPair { waiting, response })
}

/// Closed-form two-class bound for a binomial strategy under linear scaling:
/// e^{λσ}(Np/(1−q^N))·[b_1 − (1−π)(c_1 − c_2)].
pub fn waiting_bound_twoclass(n: usize, p: f64, model: &HierarchicalRateModel, lambda: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let HierarchicalRateModel::TwoClass { kappa1, kappa2, pi } = *model else {
        return Err(FjError::invalid("two-class bound needs a two-class rate model"));
    };
    model.validate(lambda)?;
    StrategySpec::binomial(n, p)?;
    let q = 1.0 - p;
    let nm1 = n as i32 - 1;
    // b_i and c_i carry the e^{λσ} factor inside their leading exponential.
    let b = |kappa: f64| (lambda * sigma - sigma * kappa).exp() * (p * (-sigma * kappa).exp() + q).powi(nm1);
    let c = |kappa: f64| {
        (lambda * sigma - sigma * kappa).exp() * (p * (1.0 - pi) * (-sigma * kappa).exp() + q).powi(nm1)
    };
    let lead = n as f64 * binomial_norm(n, p);
    Ok(lead * (b(kappa1) - (1.0 - pi) * (c(kappa1) - c(kappa2))))
}

/// Closed-form bound for truncated-exponential rates, a binomial strategy and linear scaling:
/// Npμ0 / ((1−q^N)(μ0+σ)) · (p e^{−σλ} + q)^{N−1}.
pub fn waiting_bound_hierarchical(n: usize, p: f64, model: &HierarchicalRateModel, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let HierarchicalRateModel::TruncatedExponential { mu0, truncation } = *model else {
        return Err(FjError::invalid("hierarchical bound needs a truncated-exponential rate model"));
    };
    model.validate(truncation)?;
    StrategySpec::binomial(n, p)?;
    let q = 1.0 - p;
    Ok(n as f64 * binomial_norm(n, p) * mu0 / (mu0 + sigma)
        * (p * (-sigma * truncation).exp() + q).powi(n as i32 - 1))
}

// ---------------------------------------------------------------------------
// Bound models and curves.

/// A fully specified bound, ready to be evaluated on a σ grid.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundModel {
    General { system: FJSystemSpec, rates: DecayRates },
    Scaled { mu: f64, lambda: f64, strategy: StrategySpec, phi: f64 },
    PowerSeries { kappa: f64, coefficients: SeriesCoefficients, mu: f64, lambda: f64 },
    Heterogeneous { strategy: StrategySpec, rates: RateSource, phi: f64, lambda: f64 },
}

impl BoundModel {
    pub fn general(system: &FJSystemSpec) -> Result<Self> {
        system.validate()?;
        require_stable(system)?;
        Ok(BoundModel::General { system: system.clone(), rates: decay_rates(system)? })
    }

    pub fn scaled(mu: f64, lambda: f64, strategy: StrategySpec, phi: f64) -> Result<Self> {
        check_scaled(mu, lambda, &strategy, phi)?;
        Ok(BoundModel::Scaled { mu, lambda, strategy, phi })
    }

    pub fn heterogeneous(strategy: StrategySpec, rates: RateSource, phi: f64, lambda: f64) -> Result<Self> {
        bounds_hetero_general(&strategy, &rates, phi, lambda, 0.0)?;
        Ok(BoundModel::Heterogeneous { strategy, rates, phi, lambda })
    }

    /// Picks the bound that applies to a system, an optional strategy and an optional rate model.
    ///
    /// * no strategy: per-server decay rates (selection probabilities allowed);
    /// * strategy with identical exponential servers: scaled homogeneous bound;
    /// * strategy with a rate model or distinct exponential rates: heterogeneous bound.
    pub fn for_system(
        system: &FJSystemSpec,
        strategy: Option<&StrategySpec>,
        rate_model: Option<&HierarchicalRateModel>,
    ) -> Result<Self> {
        system.validate()?;
        let Some(strategy) = strategy else {
            if rate_model.is_some() {
                return Err(FjError::Config("a rate model requires a scheduling strategy".into()));
            }
            return Self::general(system);
        };
        if strategy.n() != system.n() {
            return Err(FjError::Config(format!(
                "strategy covers {} servers but the system has {}",
                strategy.n(),
                system.n()
            )));
        }
        let lambda = system
            .arrival_rate()
            .ok_or_else(|| FjError::Config("scaled bounds need exponential inter-arrival times".into()))?;
        if system.servers.iter().any(|s| s.pi != 1.0) {
            return Err(FjError::Config("selection probabilities cannot be combined with a strategy".into()));
        }
        if let Some(model) = rate_model {
            return Self::heterogeneous(strategy.clone(), RateSource::Model(*model), system.phi, lambda);
        }
        if let Some(mu) = system.homogeneous_rate() {
            return Self::scaled(mu, lambda, strategy.clone(), system.phi);
        }
        let rates = system
            .exponential_rates()
            .ok_or_else(|| FjError::Config("scaled bounds need exponential service times".into()))?;
        Self::heterogeneous(strategy.clone(), RateSource::Fixed(rates), system.phi, lambda)
    }

    /// Short identifier of the bound family.
    pub fn family(&self) -> &'static str {
        match self {
            BoundModel::General { system, .. } => {
                if system.servers.iter().all(|s| s.pi == 1.0) {
                    "general"
                } else {
                    "thinned"
                }
            }
            BoundModel::Scaled { phi, .. } => {
                if *phi == 1.0 {
                    "linear-scaling"
                } else {
                    "partial-scaling"
                }
            }
            BoundModel::PowerSeries { .. } => "power-series",
            BoundModel::Heterogeneous { .. } => "heterogeneous",
        }
    }

    /// Asymptotic decay rate of the bound, when it is exponential.
    pub fn theta_tilde(&self) -> Option<f64> {
        match self {
            BoundModel::General { rates, .. } => rates.theta_tilde.is_finite().then_some(rates.theta_tilde),
            BoundModel::Scaled { mu, lambda, strategy, phi } => {
                Some((strategy.min_support() as f64).powf(*phi) * mu - lambda)
            }
            BoundModel::PowerSeries { mu, lambda, .. } => Some(mu - lambda),
            BoundModel::Heterogeneous { strategy, rates, phi, lambda } => strategy
                .support()
                .iter()
                .map(|&(s, _)| (s as f64).powf(*phi) * rates.min_rate(s) - lambda)
                .reduce(f64::min),
        }
    }

    pub fn evaluate(&self, sigma: f64) -> Result<BoundPair> {
        match self {
            BoundModel::General { system, rates } => general_bounds_with_rates(system, rates, sigma),
            BoundModel::Scaled { mu, lambda, strategy, phi } => Ok(BoundPair {
                waiting: waiting_bound_scaled(*mu, *lambda, strategy, *phi, sigma)?,
                response: response_bound_scaled(*mu, *lambda, strategy, *phi, sigma)?,
            }),
            BoundModel::PowerSeries { kappa, coefficients, mu, lambda } => Ok(BoundPair {
                waiting: waiting_bound_power(*kappa, coefficients, *mu, *lambda, sigma)?,
                response: response_bound_power(*kappa, coefficients, *mu, *lambda, sigma)?,
            }),
            BoundModel::Heterogeneous { strategy, rates, phi, lambda } => {
                bounds_hetero_general(strategy, rates, *phi, *lambda, sigma)
            }
        }
    }

    /// Smallest σ on a doubling-then-bisection search with bound(σ) ≤ `tail`.
    pub fn invert(&self, metric: Metric, tail: f64) -> Result<f64> {
        if !(tail > 0.0 && tail < 1.0) {
            return Err(FjError::invalid(format!("tail probability must lie in (0, 1), got {tail}")));
        }
        let value = |s: f64| self.evaluate(s).map(|b| b.get(metric));
        if value(0.0)? <= tail {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        while value(hi)? > tail {
            hi *= 2.0;
            if hi > 1e9 {
                return Err(FjError::Infeasible(format!("bound never drops below {tail}")));
            }
        }
        let mut lo = 0.0;
        while hi - lo > 1e-10 * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if value(mid)? > tail {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    pub fn curve(&self, sigmas: &[f64]) -> Result<TailBoundCurve> {
        let points = sigmas
            .par_iter()
            .map(|&s| self.evaluate(s).map(|b| (s, b)))
            .collect::<Result<Vec<_>>>()?;
        Ok(TailBoundCurve { family: self.family(), theta_tilde: self.theta_tilde(), points })
    }
}

/// Bound values on a σ grid with the metadata needed for export.
#[derive(Debug, Clone, PartialEq)]
pub struct TailBoundCurve {
    pub family: &'static str,
    pub theta_tilde: Option<f64>,
    pub points: Vec<(f64, BoundPair)>,
}

impl TailBoundCurve {
    pub fn values(&self, metric: Metric) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().map(move |(s, b)| (*s, b.get(metric)))
    }
}

/// Presentation clamp; raw values stay available from the API.
pub fn clamp_for_report(bound: f64) -> f64 {
    bound.min(1.0)
}
