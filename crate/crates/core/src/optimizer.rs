//! Strategy optimization against the tail bounds.
//!
//! The waiting and response bounds are linear in the strategy pmf, so over
//! the whole simplex the optimum sits at a vertex: a deterministic strategy.
//! The binomial family gets a one-dimensional search plus the analytic
//! monotonicity certificate for linear scaling, and a budget-constrained p*.

use serde::{Deserialize, Serialize};

use crate::bounds::{hetero_conditional, scaled_conditional, waiting_bound_scaled, BoundPair, Metric, RateSource};
use crate::error::{FjError, Result};
use crate::strategies::{binomial_norm, StrategySpec};

const GOLDEN_TOLERANCE: f64 = 1e-12;
const BUDGET_TOLERANCE: f64 = 1e-15;

/// Service rates used by the optimizer: one common rate, or a heterogeneous source.
#[derive(Debug, Clone, PartialEq)]
pub enum RateInput {
    Homogeneous(f64),
    Heterogeneous(RateSource),
}

impl RateInput {
    fn conditional(&self, s: usize, phi: f64, lambda: f64, sigma: f64) -> BoundPair {
        match self {
            RateInput::Homogeneous(mu) => scaled_conditional(*mu, lambda, s, phi, sigma),
            RateInput::Heterogeneous(rates) => hetero_conditional(rates, s, phi, lambda, sigma),
        }
    }

    fn validate(&self, lambda: f64, n: usize) -> Result<()> {
        match self {
            RateInput::Homogeneous(mu) => {
                if !(lambda > 0.0 && *mu > lambda) {
                    return Err(FjError::Stability(format!("need 0 < lambda < mu, got lambda={lambda}, mu={mu}")));
                }
                Ok(())
            }
            RateInput::Heterogeneous(rates) => rates.validate(lambda, n),
        }
    }
}

/// Bound value of an arbitrary pmf over `{1..N}` (index `i` is `s = i + 1`).
pub fn pmf_objective(pmf: &[f64], rates: &RateInput, lambda: f64, phi: f64, sigma: f64, metric: Metric) -> f64 {
    pmf.iter()
        .enumerate()
        .filter(|(_, m)| **m > 0.0)
        .map(|(i, m)| m * rates.conditional(i + 1, phi, lambda, sigma).get(metric))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexOptimum {
    /// Optimal number of servers s*.
    pub servers: usize,
    pub value: f64,
    /// Objective at every vertex, `per_vertex[i]` for `s = i + 1`.
    pub per_vertex: Vec<f64>,
}

impl VertexOptimum {
    pub fn strategy(&self) -> StrategySpec {
        StrategySpec::Deterministic { n: self.per_vertex.len(), s: self.servers }
    }
}

/// Minimizes the bound over all pmfs on `{1..N}` by scanning the simplex vertices.
/// Ties go to the smaller server count.
pub fn optimize_pmf(
    n: usize,
    rates: &RateInput,
    lambda: f64,
    phi: f64,
    sigma: f64,
    metric: Metric,
) -> Result<VertexOptimum> {
    if n == 0 {
        return Err(FjError::invalid("need at least one server"));
    }
    if !(0.0..=1.0).contains(&phi) {
        return Err(FjError::invalid(format!("phi must lie in [0, 1], got {phi}")));
    }
    rates.validate(lambda, n)?;
    let per_vertex: Vec<f64> = (1..=n).map(|s| rates.conditional(s, phi, lambda, sigma).get(metric)).collect();
    let (best, value) = per_vertex
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    Ok(VertexOptimum { servers: best + 1, value, per_vertex })
}

/// Sign analysis of Q(q) = Σ_{k=0}^{N−2} (Nε − 1 − k) q^k, whose sign is that of dψ/dq.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCertificate {
    pub n: usize,
    pub epsilon: f64,
    pub coefficients: Vec<f64>,
    pub sign_changes: usize,
    pub q_at_zero: f64,
    pub q_at_one: f64,
    /// dψ/dq > 0 on [0, 1): the bound decreases in p and p_opt = 1.
    pub certified: bool,
}

pub fn monotonicity_certificate(n: usize, epsilon: f64) -> Result<MonotonicityCertificate> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(FjError::invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if n == 0 {
        return Err(FjError::invalid("need at least one server"));
    }
    let nf = n as f64;
    let coefficients: Vec<f64> = (0..n.saturating_sub(1)).map(|k| nf * epsilon - 1.0 - k as f64).collect();
    let signs: Vec<bool> = coefficients.iter().filter(|c| **c != 0.0).map(|c| *c > 0.0).collect();
    let sign_changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    let q_at_zero = nf * epsilon - 1.0;
    let q_at_one = nf * (nf - 1.0) * (epsilon - 0.5);
    // With at most one sign change Q has at most one root in (0, ∞), so
    // positive values at both ends rule out a root in [0, 1].
    let certified = n >= 2 && sign_changes <= 1 && q_at_zero > 0.0 && q_at_one > 0.0;
    Ok(MonotonicityCertificate { n, epsilon, coefficients, sign_changes, q_at_zero, q_at_one, certified })
}

/// ψ(q) = (εq + 1 − ε)^{N−1} / Σ_{k<N} q^k.
pub fn psi(n: usize, epsilon: f64, q: f64) -> f64 {
    let denom: f64 = (0..n).map(|k| q.powi(k as i32)).sum();
    (epsilon * q + 1.0 - epsilon).powi(n as i32 - 1) / denom
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinomialOptimum {
    pub p_opt: f64,
    pub value: f64,
    /// Present for linear scaling, where the analytic argument applies.
    pub certificate: Option<MonotonicityCertificate>,
}

fn binomial_objective(n: usize, mu: f64, lambda: f64, phi: f64, sigma: f64, p: f64, metric: Metric) -> f64 {
    let st = StrategySpec::Binomial { n, p };
    pmf_objective(&st.pmf_vec(), &RateInput::Homogeneous(mu), lambda, phi, sigma, metric)
}

/// Minimizes the binomial-strategy bound over p ∈ (0, 1]: grid scan at `resolution`,
/// then golden-section refinement around the best grid point.
pub fn optimize_binomial_p(
    n: usize,
    mu: f64,
    lambda: f64,
    phi: f64,
    sigma: f64,
    resolution: f64,
    metric: Metric,
) -> Result<BinomialOptimum> {
    if !(sigma > 0.0) {
        return Err(FjError::invalid(format!("sigma must be > 0, got {sigma}")));
    }
    if !(resolution > 0.0 && resolution <= 0.5) {
        return Err(FjError::invalid(format!("grid resolution must lie in (0, 0.5], got {resolution}")));
    }
    RateInput::Homogeneous(mu).validate(lambda, n)?;
    StrategySpec::binomial(n, 1.0)?;
    if !(0.0..=1.0).contains(&phi) {
        return Err(FjError::invalid(format!("phi must lie in [0, 1], got {phi}")));
    }
    let f = |p: f64| binomial_objective(n, mu, lambda, phi, sigma, p, metric);

    let steps = (1.0 / resolution).round() as usize;
    let grid: Vec<f64> = (1..=steps).map(|k| (k as f64 / steps as f64).min(1.0)).collect();
    let values: Vec<f64> = grid.iter().map(|&p| f(p)).collect();
    let (k_best, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });

    let lo = if k_best == 0 { GOLDEN_TOLERANCE } else { grid[k_best - 1] };
    let hi = grid[(k_best + 1).min(grid.len() - 1)];
    let refined = golden_section(&f, lo, hi);

    let mut candidates = [(grid[k_best], values[k_best]), (refined, f(refined)), (1.0, f(1.0))];
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1).then(b.0.total_cmp(&a.0)));
    let (mut p_opt, mut value) = candidates[0];

    let certificate = if phi == 1.0 {
        Some(monotonicity_certificate(n, -(-mu * sigma).exp_m1())?)
    } else {
        None
    };
    if metric == Metric::Waiting && certificate.as_ref().is_some_and(|c| c.certified) {
        // The bound is decreasing in p; the search can only tie at p = 1.
        debug_assert!(f(1.0) <= value * (1.0 + 1e-12));
        p_opt = 1.0;
        value = f(1.0);
    }
    Ok(BinomialOptimum { p_opt, value, certificate })
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > GOLDEN_TOLERANCE {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetOptimum {
    pub p_star: f64,
    pub expected_servers: f64,
    /// Linear-scaling waiting bound of Bin(N, p*) at σ.
    pub value: f64,
}

/// Largest p with E[S] = Np/(1 − q^N) ≤ S*, by bisection.
pub fn budget_p_star(n: usize, budget: f64) -> Result<f64> {
    if n == 0 {
        return Err(FjError::invalid("need at least one server"));
    }
    if !(budget >= 1.0) {
        return Err(FjError::Infeasible(format!("budget {budget} is below one server")));
    }
    let expected = |p: f64| n as f64 * binomial_norm(n, p);
    if n == 1 || budget >= n as f64 {
        return Ok(1.0);
    }
    if budget == 1.0 {
        return Err(FjError::Infeasible(format!(
            "every p in (0, 1] uses more than one server on average when N = {n}"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > BUDGET_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if expected(mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

pub fn optimize_budget(n: usize, budget: f64, mu: f64, lambda: f64, sigma: f64) -> Result<BudgetOptimum> {
    let p_star = budget_p_star(n, budget)?;
    let st = StrategySpec::binomial(n, p_star)?;
    let value = waiting_bound_scaled(mu, lambda, &st, 1.0, sigma)?;
    Ok(BudgetOptimum { p_star, expected_servers: st.expected_servers(), value })
}
