//! Scheduling strategies: distributions over the number of utilized servers.
//!
//! A strategy is a pmf on `{1..N}`. Besides the pmf itself the bound engine
//! needs the exponential moments `E[S^r e^{-aS}]` (r = 1, 2), which have
//! closed forms for the binomial, uniform and power-series families.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FjError, Result};
use crate::system::binomial_coefficient;

/// Below this exponent the uniform closed forms cancel badly; sum directly instead.
const UNIFORM_CLOSED_FORM_MIN_A: f64 = 1e-3;
const PMF_SUM_TOLERANCE: f64 = 1e-12;
const MAX_SERIES_TERMS: usize = 1_000_000;

/// Power `r` of `S` in `E[S^r e^{-aS}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentOrder {
    First,
    Second,
}

impl MomentOrder {
    pub fn power(self) -> i32 {
        match self {
            MomentOrder::First => 1,
            MomentOrder::Second => 2,
        }
    }
}

/// Coefficients `a_k` (k ≥ 1) of the power series ζ(x) = Σ a_k x^k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeriesCoefficients {
    /// `a[0]` is a_1; coefficients past the end are zero.
    Explicit { a: Vec<f64> },
    /// a_k = 1: ζ(x) = x / (1 − x).
    Geometric,
    /// a_k = 1/k: ζ(x) = −ln(1 − x).
    Logarithmic,
    /// a_k = 1/k!: ζ(x) = e^x − 1.
    Poisson,
}

impl SeriesCoefficients {
    pub fn coefficient(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self {
            SeriesCoefficients::Explicit { a } => a.get(k - 1).copied().unwrap_or(0.0),
            SeriesCoefficients::Geometric => 1.0,
            SeriesCoefficients::Logarithmic => 1.0 / k as f64,
            SeriesCoefficients::Poisson => (1..=k).fold(1.0, |acc, i| acc / i as f64),
        }
    }

    pub fn radius_of_convergence(&self) -> f64 {
        match self {
            SeriesCoefficients::Geometric | SeriesCoefficients::Logarithmic => 1.0,
            SeriesCoefficients::Explicit { .. } | SeriesCoefficients::Poisson => f64::INFINITY,
        }
    }

    fn validate(&self) -> Result<()> {
        if let SeriesCoefficients::Explicit { a } = self {
            if a.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(FjError::invalid("power-series coefficients must be finite and >= 0"));
            }
        }
        Ok(())
    }

    /// `deriv`-th derivative of the full series ζ at `x`, in closed form.
    pub fn zeta(&self, x: f64, deriv: u8) -> Result<f64> {
        if x < 0.0 || x >= self.radius_of_convergence() {
            return Err(FjError::Divergence(format!(
                "argument {x} outside the radius of convergence {}",
                self.radius_of_convergence()
            )));
        }
        Ok(match (self, deriv) {
            (SeriesCoefficients::Explicit { a }, d) => truncated_zeta(self, x, d, a.len()),
            (SeriesCoefficients::Geometric, 0) => x / (1.0 - x),
            (SeriesCoefficients::Geometric, 1) => 1.0 / (1.0 - x).powi(2),
            (SeriesCoefficients::Geometric, _) => 2.0 / (1.0 - x).powi(3),
            (SeriesCoefficients::Logarithmic, 0) => -(-x).ln_1p(),
            (SeriesCoefficients::Logarithmic, 1) => 1.0 / (1.0 - x),
            (SeriesCoefficients::Logarithmic, _) => 1.0 / (1.0 - x).powi(2),
            (SeriesCoefficients::Poisson, 0) => x.exp_m1(),
            (SeriesCoefficients::Poisson, _) => x.exp(),
        })
    }

    /// Same quantity as [`zeta`](Self::zeta), by summing terms until they vanish.
    pub fn zeta_by_terms(&self, x: f64, deriv: u8) -> Result<f64> {
        if x < 0.0 || x >= self.radius_of_convergence() {
            return Err(FjError::Divergence(format!("argument {x} outside the radius of convergence")));
        }
        if let SeriesCoefficients::Explicit { a } = self {
            return Ok(truncated_zeta(self, x, deriv, a.len()));
        }
        let mut sum = 0.0;
        let mut small_run = 0;
        for k in 1..MAX_SERIES_TERMS {
            let term = self.coefficient(k) * falling(k, deriv) * pow_nonneg(x, k as i64 - deriv as i64);
            sum += term;
            if term.abs() <= f64::EPSILON * 1e-3 * sum.abs() && k > deriv as usize + 1 {
                small_run += 1;
                if small_run >= 8 {
                    return Ok(sum);
                }
            } else {
                small_run = 0;
            }
        }
        Err(FjError::Divergence(format!("series at {x} did not converge in {MAX_SERIES_TERMS} terms")))
    }
}

/// k·(k−1)·…·(k−d+1).
fn falling(k: usize, d: u8) -> f64 {
    (0..d as usize).fold(1.0, |acc, i| acc * k.saturating_sub(i) as f64)
}

fn pow_nonneg(x: f64, e: i64) -> f64 {
    if e <= 0 {
        1.0
    } else {
        x.powi(e as i32)
    }
}

/// `deriv`-th derivative of ζ_N(x) = Σ_{k=1}^{N} a_k x^k.
fn truncated_zeta(coeffs: &SeriesCoefficients, x: f64, deriv: u8, n: usize) -> f64 {
    (1..=n)
        .filter(|&k| k >= deriv as usize)
        .map(|k| coeffs.coefficient(k) * falling(k, deriv) * pow_nonneg(x, k as i64 - deriv as i64))
        .sum()
}

/// Distribution f_S of the number of servers a job is split across.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    /// Always `s` servers out of `n`.
    Deterministic { n: usize, s: usize },
    /// Uniform over `{1..n}`.
    Uniform { n: usize },
    /// Binomial(n, p) conditioned on at least one server.
    Binomial { n: usize, p: f64 },
    /// pmf ∝ a_s κ^s, truncated to `{1..n}`.
    PowerSeries { n: usize, kappa: f64, coefficients: SeriesCoefficients },
    /// Arbitrary non-negative weights over `{1..len}`, normalized.
    Explicit { weights: Vec<f64> },
}

impl StrategySpec {
    pub fn deterministic(n: usize, s: usize) -> Result<Self> {
        let st = StrategySpec::Deterministic { n, s };
        st.validate()?;
        Ok(st)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        let st = StrategySpec::Uniform { n };
        st.validate()?;
        Ok(st)
    }

    pub fn binomial(n: usize, p: f64) -> Result<Self> {
        let st = StrategySpec::Binomial { n, p };
        st.validate()?;
        Ok(st)
    }

    pub fn power_series(n: usize, kappa: f64, coefficients: SeriesCoefficients) -> Result<Self> {
        let st = StrategySpec::PowerSeries { n, kappa, coefficients };
        st.validate()?;
        Ok(st)
    }

    pub fn explicit(weights: Vec<f64>) -> Result<Self> {
        let st = StrategySpec::Explicit { weights };
        st.validate()?;
        Ok(st)
    }

    pub fn n(&self) -> usize {
        match self {
            StrategySpec::Deterministic { n, .. }
            | StrategySpec::Uniform { n }
            | StrategySpec::Binomial { n, .. }
            | StrategySpec::PowerSeries { n, .. } => *n,
            StrategySpec::Explicit { weights } => weights.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n() == 0 {
            return Err(FjError::invalid("strategy needs at least one server"));
        }
        match self {
            StrategySpec::Deterministic { n, s } => {
                if *s == 0 || s > n {
                    return Err(FjError::Range { value: *s, n: *n });
                }
            }
            StrategySpec::Uniform { .. } => {}
            StrategySpec::Binomial { p, .. } => {
                if !(*p > 0.0 && *p <= 1.0) {
                    return Err(FjError::invalid(format!("binomial p must lie in (0, 1], got {p}")));
                }
            }
            StrategySpec::PowerSeries { n, kappa, coefficients } => {
                coefficients.validate()?;
                if !(*kappa > 0.0 && kappa.is_finite()) {
                    return Err(FjError::invalid(format!("kappa must be > 0, got {kappa}")));
                }
                let z = truncated_zeta(coefficients, *kappa, 0, *n);
                if !(z > 0.0 && z.is_finite()) {
                    return Err(FjError::invalid("power-series strategy has no mass on {1..n}"));
                }
            }
            StrategySpec::Explicit { weights } => {
                if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
                    return Err(FjError::invalid("pmf weights must be finite and >= 0"));
                }
                if !(weights.iter().sum::<f64>() > 0.0) {
                    return Err(FjError::invalid("pmf weights sum to zero"));
                }
            }
        }
        Ok(())
    }

    /// P(S = s); `Range` error outside `{1..N}`.
    pub fn pmf(&self, s: usize) -> Result<f64> {
        let n = self.n();
        if s == 0 || s > n {
            return Err(FjError::Range { value: s, n });
        }
        Ok(self.pmf_unchecked(s))
    }

    fn pmf_unchecked(&self, s: usize) -> f64 {
        match self {
            StrategySpec::Deterministic { s: d, .. } => {
                if s == *d {
                    1.0
                } else {
                    0.0
                }
            }
            StrategySpec::Uniform { n } => 1.0 / *n as f64,
            StrategySpec::Binomial { n, p } => {
                let q = 1.0 - p;
                binomial_coefficient(*n, s) * p.powi(s as i32) * q.powi((n - s) as i32) * binomial_norm(*n, *p) / p
            }
            StrategySpec::PowerSeries { n, kappa, coefficients } => {
                coefficients.coefficient(s) * kappa.powi(s as i32) / truncated_zeta(coefficients, *kappa, 0, *n)
            }
            StrategySpec::Explicit { weights } => weights[s - 1] / weights.iter().sum::<f64>(),
        }
    }

    /// pmf as a vector; index `i` holds P(S = i + 1).
    pub fn pmf_vec(&self) -> Vec<f64> {
        (1..=self.n()).map(|s| self.pmf_unchecked(s)).collect()
    }

    /// Servers with positive mass, with their probabilities.
    pub fn support(&self) -> Vec<(usize, f64)> {
        self.pmf_vec()
            .into_iter()
            .enumerate()
            .filter(|(_, m)| *m > 0.0)
            .map(|(i, m)| (i + 1, m))
            .collect()
    }

    pub fn min_support(&self) -> usize {
        self.support().first().map(|(s, _)| *s).unwrap_or(1)
    }

    /// E[S].
    pub fn expected_servers(&self) -> f64 {
        match self {
            StrategySpec::Deterministic { s, .. } => *s as f64,
            StrategySpec::Uniform { n } => 0.5 * (*n as f64 + 1.0),
            StrategySpec::Binomial { n, p } => *n as f64 * binomial_norm(*n, *p),
            _ => self.pmf_vec().iter().enumerate().map(|(i, m)| (i + 1) as f64 * m).sum(),
        }
    }

    /// E[S^r e^{-aS}].
    pub fn exp_moment(&self, a: f64, order: MomentOrder) -> f64 {
        self.exp_moment_shifted(a, order, 0.0)
    }

    /// e^{shift}·E[S^r e^{-aS}], evaluated without forming e^{shift} on its own.
    pub fn exp_moment_shifted(&self, a: f64, order: MomentOrder, shift: f64) -> f64 {
        let r = order.power();
        match self {
            StrategySpec::Deterministic { s, .. } => (*s as f64).powi(r) * (shift - a * *s as f64).exp(),
            StrategySpec::Uniform { n } => uniform_exp_moment(*n, a, order, shift),
            StrategySpec::Binomial { n, p } => binomial_exp_moment(*n, *p, a, order, shift),
            StrategySpec::PowerSeries { n, kappa, coefficients } => {
                let x = kappa * (-a).exp();
                let zeta_kappa = truncated_zeta(coefficients, *kappa, 0, *n);
                let d1 = truncated_zeta(coefficients, x, 1, *n);
                let pre = kappa * (shift - a).exp() / zeta_kappa;
                match order {
                    MomentOrder::First => pre * d1,
                    MomentOrder::Second => pre * (x * truncated_zeta(coefficients, x, 2, *n) + d1),
                }
            }
            StrategySpec::Explicit { .. } => self.sum_moment(|s| (shift - a * s).exp(), r),
        }
    }

    /// E[S^r e^{-c S^φ}] by exact summation over the support.
    pub fn exp_moment_partial(&self, c: f64, phi: f64, order: MomentOrder) -> f64 {
        self.exp_moment_partial_shifted(c, phi, order, 0.0)
    }

    pub fn exp_moment_partial_shifted(&self, c: f64, phi: f64, order: MomentOrder, shift: f64) -> f64 {
        self.sum_moment(|s| (shift - c * s.powf(phi)).exp(), order.power())
    }

    fn sum_moment(&self, weight: impl Fn(f64) -> f64, r: i32) -> f64 {
        self.pmf_vec()
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(i, m)| {
                let s = (i + 1) as f64;
                m * s.powi(r) * weight(s)
            })
            .sum()
    }

    /// Draws a server count by inverting the cumulative pmf.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let pmf = self.pmf_vec();
        for (i, m) in pmf.iter().enumerate() {
            acc += m;
            if u < acc {
                return i + 1;
            }
        }
        // Rounding left u above the final cumulative sum.
        pmf.iter().rposition(|m| *m > 0.0).map(|i| i + 1).unwrap_or(1)
    }

    /// `|Σ pmf − 1| ≤ 1e-12` and every mass is non-negative.
    pub fn is_normalized(&self) -> bool {
        let pmf = self.pmf_vec();
        pmf.iter().all(|&m| m >= 0.0) && (pmf.iter().sum::<f64>() - 1.0).abs() <= PMF_SUM_TOLERANCE
    }
}

/// p / (1 − q^N) written as 1 / Σ_{k<N} q^k, which stays accurate for small p.
pub(crate) fn binomial_norm(n: usize, p: f64) -> f64 {
    let q = 1.0 - p;
    let mut sum = 0.0;
    let mut term = 1.0;
    for _ in 0..n {
        sum += term;
        term *= q;
    }
    1.0 / sum
}

fn binomial_exp_moment(n: usize, p: f64, a: f64, order: MomentOrder, shift: f64) -> f64 {
    let nf = n as f64;
    if p == 1.0 {
        return nf.powi(order.power()) * (shift - a * nf).exp();
    }
    let q = 1.0 - p;
    let e = (-a).exp();
    let y = p * e + q;
    let pre = nf * binomial_norm(n, p) * (shift - a).exp();
    match order {
        MomentOrder::First => pre * y.powi(n as i32 - 1),
        MomentOrder::Second => {
            if n == 1 {
                pre
            } else {
                pre * (nf * p * e + q) * y.powi(n as i32 - 2)
            }
        }
    }
}

fn uniform_exp_moment(n: usize, a: f64, order: MomentOrder, shift: f64) -> f64 {
    let nf = n as f64;
    if a == 0.0 {
        let m = match order {
            MomentOrder::First => 0.5 * (nf + 1.0),
            MomentOrder::Second => (nf + 1.0) * (2.0 * nf + 1.0) / 6.0,
        };
        return m * shift.exp();
    }
    if a < UNIFORM_CLOSED_FORM_MIN_A {
        let r = order.power();
        return (1..=n).map(|s| (s as f64).powi(r) * (shift - a * s as f64).exp()).sum::<f64>() / nf;
    }
    let d = -(-a).exp_m1();
    let tail = -(-(nf + 1.0) * a).exp_m1();
    let first = (shift - a).exp() / (nf * d) * (tail / d - (nf + 1.0) * (-a * nf).exp());
    match order {
        MomentOrder::First => first,
        MomentOrder::Second => {
            // E[S(S−1)e^{-aS}] + E[S e^{-aS}].
            let factorial = (shift - 2.0 * a).exp() / (nf * d)
                * (2.0 * tail / (d * d)
                    - 2.0 * (nf + 1.0) * (-nf * a).exp() / d
                    - (nf + 1.0) * nf * (-(nf - 1.0) * a).exp());
            factorial + first
        }
    }
}

/// E[S^r e^{-aS}] for a power-series strategy on the full support ℕ, via the
/// closed-form ζ′ and ζ″ of the coefficient family.
pub fn power_series_exp_moment_untruncated(
    coefficients: &SeriesCoefficients,
    kappa: f64,
    a: f64,
    order: MomentOrder,
    shift: f64,
) -> Result<f64> {
    let zeta_kappa = coefficients.zeta(kappa, 0)?;
    let x = kappa * (-a).exp();
    let d1 = coefficients.zeta(x, 1)?;
    let pre = kappa * (shift - a).exp() / zeta_kappa;
    Ok(match order {
        MomentOrder::First => pre * d1,
        MomentOrder::Second => pre * (x * coefficients.zeta(x, 2)? + d1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;

    fn brute(st: &StrategySpec, a: f64, r: i32) -> f64 {
        (1..=st.n()).map(|s| (s as f64).powi(r) * (-a * s as f64).exp() * st.pmf(s).unwrap()).sum()
    }

    #[test]
    fn pmf_examples() {
        let b = StrategySpec::binomial(2, 0.5).unwrap();
        assert!((b.pmf(1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(StrategySpec::deterministic(5, 3).unwrap().pmf(3).unwrap(), 1.0);
        assert!((StrategySpec::uniform(10).unwrap().pmf(7).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(b.pmf(0), Err(FjError::Range { .. })));
        assert!(matches!(b.pmf(3), Err(FjError::Range { value: 3, n: 2 })));
    }

    #[test]
    fn rejects_invalid() {
        assert!(StrategySpec::binomial(5, 0.0).is_err());
        assert!(StrategySpec::binomial(5, 1.1).is_err());
        assert!(StrategySpec::deterministic(3, 4).is_err());
        assert!(StrategySpec::uniform(0).is_err());
        assert!(StrategySpec::explicit(vec![0.0, 0.0]).is_err());
        assert!(StrategySpec::explicit(vec![-0.1, 1.1]).is_err());
        assert!(StrategySpec::power_series(3, 0.0, SeriesCoefficients::Geometric).is_err());
    }

    #[test]
    fn expected_servers_examples() {
        let b = StrategySpec::binomial(2, 0.5).unwrap();
        assert!((b.expected_servers() - 4.0 / 3.0).abs() < 1e-15);
        assert!((StrategySpec::binomial(7, 1.0).unwrap().expected_servers() - 7.0).abs() < 1e-15);
        let flat = StrategySpec::explicit(vec![1.0; 10]).unwrap();
        assert!((flat.expected_servers() - 5.5).abs() < 1e-14);
    }

    #[test]
    fn exp_moment_examples() {
        let b = StrategySpec::binomial(3, 1.0).unwrap();
        assert!((b.exp_moment(0.5, MomentOrder::First) - 3.0 * (-1.5f64).exp()).abs() < 1e-15);
        let b = StrategySpec::binomial(2, 0.5).unwrap();
        assert!((b.exp_moment(0.0, MomentOrder::First) - 4.0 / 3.0).abs() < 1e-15);
        let u = StrategySpec::uniform(10).unwrap();
        let oracle: f64 = (1..=10).map(|s| (s * s) as f64 * (-0.7 * s as f64).exp()).sum::<f64>() / 10.0;
        assert!((u.exp_moment(0.7, MomentOrder::Second) - oracle).abs() < 1e-12);
    }

    #[test]
    fn partial_moment_reductions() {
        let st = StrategySpec::binomial(10, 0.3).unwrap();
        for order in [MomentOrder::First, MomentOrder::Second] {
            let full = st.exp_moment(1.3, order);
            assert!((st.exp_moment_partial(1.3, 1.0, order) - full).abs() <= 1e-12 * full.max(1.0));
            let es_r = st.exp_moment(0.0, order);
            let zero = st.exp_moment_partial(1.3, 0.0, order);
            assert!((zero - (-1.3f64).exp() * es_r).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_moment_matches_monte_carlo() {
        let st = StrategySpec::binomial(10, 0.5).unwrap();
        let exact = st.exp_moment_partial(1.0, 0.2, MomentOrder::First);
        let mut rng = stream_rng(3, 0);
        let n = 10_000_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let s = st.sample(&mut rng) as f64;
            let v = s * (-(s.powf(0.2))).exp();
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - exact).abs() < 5.0 * se, "{mean} vs {exact}");
    }

    #[test]
    fn binomial_tends_to_deterministic() {
        let det = StrategySpec::deterministic(8, 8).unwrap().pmf_vec();
        let mut prev = f64::INFINITY;
        for &p in &[0.9, 0.99, 0.999, 0.9999] {
            let b = StrategySpec::binomial(8, p).unwrap().pmf_vec();
            let tv: f64 = 0.5 * b.iter().zip(&det).map(|(x, y)| (x - y).abs()).sum::<f64>();
            assert!(tv < prev);
            prev = tv;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn power_series_mimics_binomial() {
        let (n, p) = (9usize, 0.35);
        let coeffs = SeriesCoefficients::Explicit { a: (1..=n).map(|k| binomial_coefficient(n, k)).collect() };
        let ps = StrategySpec::power_series(n, p / (1.0 - p), coeffs).unwrap();
        let b = StrategySpec::binomial(n, p).unwrap();
        for s in 1..=n {
            assert!((ps.pmf(s).unwrap() - b.pmf(s).unwrap()).abs() < 1e-14);
        }
        for &a in &[0.0, 0.4, 2.0] {
            for order in [MomentOrder::First, MomentOrder::Second] {
                let (x, y) = (ps.exp_moment(a, order), b.exp_moment(a, order));
                assert!((x - y).abs() <= 1e-12 * y.max(1.0));
            }
        }
    }

    #[test]
    fn series_closed_forms_match_term_sums() {
        let families = [
            (SeriesCoefficients::Geometric, 0.5),
            (SeriesCoefficients::Logarithmic, 0.8),
            (SeriesCoefficients::Poisson, 2.5),
            (SeriesCoefficients::Explicit { a: vec![0.5, 0.0, 2.0] }, 1.7),
        ];
        for (c, x) in families {
            for d in 0..=2 {
                let closed = c.zeta(x, d).unwrap();
                let terms = c.zeta_by_terms(x, d).unwrap();
                assert!((closed - terms).abs() <= 1e-12 * closed.abs().max(1.0), "{c:?} d={d}");
            }
        }
        // Geometric κ = 0.5: ζ = 1, ζ′ = 4.
        let g = SeriesCoefficients::Geometric;
        assert!((g.zeta(0.5, 0).unwrap() - 1.0).abs() < 1e-15);
        assert!((g.zeta(0.5, 1).unwrap() - 4.0).abs() < 1e-15);
        assert!(matches!(g.zeta(1.0, 0), Err(FjError::Divergence(_))));
        assert!(matches!(g.zeta_by_terms(1.2, 0), Err(FjError::Divergence(_))));
    }

    #[test]
    fn untruncated_moments_match_summation() {
        let c = SeriesCoefficients::Geometric;
        let kappa = 0.6;
        let zeta = c.zeta(kappa, 0).unwrap();
        for &a in &[0.1, 0.5, 2.0] {
            for order in [MomentOrder::First, MomentOrder::Second] {
                let r = order.power();
                let oracle: f64 = (1..4000)
                    .map(|k| (k as f64).powi(r) * (-a * k as f64).exp() * kappa.powi(k) / zeta)
                    .sum();
                let v = power_series_exp_moment_untruncated(&c, kappa, a, order, 0.0).unwrap();
                assert!((v - oracle).abs() < 1e-12, "a={a}");
            }
        }
    }

    #[test]
    fn sampling_follows_pmf() {
        let st = StrategySpec::binomial(6, 0.4).unwrap();
        let mut rng = stream_rng(17, 0);
        let n = 200_000;
        let mut counts = [0usize; 6];
        for _ in 0..n {
            counts[st.sample(&mut rng) - 1] += 1;
        }
        for (i, c) in counts.iter().enumerate() {
            let p = st.pmf(i + 1).unwrap();
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 5.0 * se + 1e-12);
        }
    }

    fn any_strategy() -> impl Strategy<Value = StrategySpec> {
        prop_oneof![
            (1usize..=20, 1usize..=20).prop_map(|(n, s)| StrategySpec::Deterministic { n, s: s.min(n) }),
            (1usize..=20).prop_map(|n| StrategySpec::Uniform { n }),
            (1usize..=20, 0.01f64..=1.0).prop_map(|(n, p)| StrategySpec::Binomial { n, p }),
            (1usize..=20, 0.05f64..0.95).prop_map(|(n, kappa)| StrategySpec::PowerSeries {
                n,
                kappa,
                coefficients: SeriesCoefficients::Logarithmic
            }),
            prop::collection::vec(0.0f64..1.0, 1..20)
                .prop_filter("positive mass", |w| w.iter().sum::<f64>() > 0.0)
                .prop_map(|weights| StrategySpec::Explicit { weights }),
        ]
    }

    proptest! {
        #[test]
        fn pmf_is_normalized(st in any_strategy()) {
            prop_assert!(st.is_normalized());
        }

        #[test]
        fn closed_forms_match_summation(st in any_strategy(), a in 0.0f64..5.0) {
            for order in [MomentOrder::First, MomentOrder::Second] {
                let v = st.exp_moment(a, order);
                let b = brute(&st, a, order.power());
                prop_assert!((v - b).abs() <= 1e-12 * b.max(1.0), "{} vs {}", v, b);
            }
        }

        #[test]
        fn exp_moment_non_increasing(st in any_strategy(), a in 0.0f64..5.0, da in 0.0f64..1.0) {
            for order in [MomentOrder::First, MomentOrder::Second] {
                prop_assert!(st.exp_moment(a + da, order) <= st.exp_moment(a, order) * (1.0 + 1e-12));
            }
        }
    }
}
