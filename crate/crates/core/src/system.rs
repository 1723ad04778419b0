//! Fork-join system descriptions shared by the bound engine and the simulator.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::distributions::{DistributionSpec, TransformedDistribution};
use crate::error::{FjError, Result};

fn default_pi() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerSpec {
    pub service: DistributionSpec,
    /// Probability that the server is selected for an arriving job.
    #[serde(default = "default_pi")]
    pub pi: f64,
}

impl ServerSpec {
    pub fn new(service: DistributionSpec, pi: f64) -> Self {
        Self { service, pi }
    }

    pub fn always(service: DistributionSpec) -> Self {
        Self { service, pi: 1.0 }
    }

    pub fn thinned_service(&self) -> TransformedDistribution {
        self.service.thinned(self.pi)
    }
}

/// N servers, a renewal arrival process and the scaling exponent φ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FJSystemSpec {
    pub servers: Vec<ServerSpec>,
    pub arrival: DistributionSpec,
    #[serde(default = "default_pi")]
    pub phi: f64,
}

impl FJSystemSpec {
    pub fn new(servers: Vec<ServerSpec>, arrival: DistributionSpec, phi: f64) -> Result<Self> {
        let sys = Self { servers, arrival, phi };
        sys.validate()?;
        Ok(sys)
    }

    /// `n` identical always-selected servers.
    pub fn homogeneous(n: usize, service: DistributionSpec, arrival: DistributionSpec, phi: f64) -> Result<Self> {
        Self::new(vec![ServerSpec::always(service); n], arrival, phi)
    }

    pub fn n(&self) -> usize {
        self.servers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.servers.is_empty() {
            return Err(FjError::invalid("a fork-join system needs at least one server"));
        }
        for (i, s) in self.servers.iter().enumerate() {
            s.service
                .validate_service()
                .map_err(|e| FjError::invalid(format!("server {i}: {e}")))?;
            if !(0.0..=1.0).contains(&s.pi) {
                return Err(FjError::invalid(format!("server {i}: pi must lie in [0, 1], got {}", s.pi)));
            }
        }
        self.arrival.validate_service().map_err(|e| FjError::invalid(format!("arrival: {e}")))?;
        if !(0.0..=1.0).contains(&self.phi) {
            return Err(FjError::invalid(format!("phi must lie in [0, 1], got {}", self.phi)));
        }
        Ok(())
    }

    /// Exponential arrival rate, if the arrival process is Poisson.
    pub fn arrival_rate(&self) -> Option<f64> {
        match self.arrival {
            DistributionSpec::Exponential { rate } => Some(rate),
            _ => None,
        }
    }

    /// Service rates when every server is exponential.
    pub fn exponential_rates(&self) -> Option<Vec<f64>> {
        self.servers
            .iter()
            .map(|s| match s.service {
                DistributionSpec::Exponential { rate } => Some(rate),
                _ => None,
            })
            .collect()
    }

    /// The common rate when all servers are identical, always-selected exponentials.
    pub fn homogeneous_rate(&self) -> Option<f64> {
        let rates = self.exponential_rates()?;
        let first = rates[0];
        let same = rates.iter().all(|&r| r == first) && self.servers.iter().all(|s| s.pi == 1.0);
        same.then_some(first)
    }
}

/// Hyper-distribution of exponential service rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HierarchicalRateModel {
    /// Rate `kappa1` with probability `pi`, `kappa2` otherwise.
    TwoClass { kappa1: f64, kappa2: f64, pi: f64 },
    /// Density `mu0·exp(−mu0(x − truncation))` on `x > truncation`.
    TruncatedExponential { mu0: f64, truncation: f64 },
}

impl HierarchicalRateModel {
    /// Checks the model against an arrival rate λ (every drawn rate must exceed it).
    pub fn validate(&self, lambda: f64) -> Result<()> {
        match *self {
            HierarchicalRateModel::TwoClass { kappa1, kappa2, pi } => {
                if !(0.0..=1.0).contains(&pi) {
                    return Err(FjError::invalid(format!("class probability must lie in [0, 1], got {pi}")));
                }
                if !(kappa1 < kappa2) {
                    return Err(FjError::ParameterOrder(format!("need kappa1 < kappa2, got {kappa1} >= {kappa2}")));
                }
                if !(lambda < kappa1) {
                    return Err(FjError::ParameterOrder(format!("need lambda < kappa1, got {lambda} >= {kappa1}")));
                }
            }
            HierarchicalRateModel::TruncatedExponential { mu0, truncation } => {
                if !(mu0 > 0.0 && mu0.is_finite()) {
                    return Err(FjError::invalid(format!("mu0 must be > 0, got {mu0}")));
                }
                if !(truncation >= lambda) {
                    return Err(FjError::Stability(format!(
                        "rates truncated at {truncation} may not exceed the arrival rate {lambda}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn sample_rate<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            HierarchicalRateModel::TwoClass { kappa1, kappa2, pi } => {
                if rng.random::<f64>() < pi {
                    kappa1
                } else {
                    kappa2
                }
            }
            HierarchicalRateModel::TruncatedExponential { mu0, truncation } => {
                let e: f64 = Exp1.sample(rng);
                truncation + e / mu0
            }
        }
    }

    /// Smallest rate the model can produce.
    pub fn min_rate(&self) -> f64 {
        match *self {
            HierarchicalRateModel::TwoClass { kappa1, .. } => kappa1,
            HierarchicalRateModel::TruncatedExponential { truncation, .. } => truncation,
        }
    }

    /// E[exp(shift − c·Y_s)] where Y_s is the minimum of `s` drawn rates.
    pub fn min_rate_laplace_shifted(&self, s: usize, c: f64, shift: f64) -> f64 {
        match *self {
            HierarchicalRateModel::TwoClass { kappa1, kappa2, pi } => {
                let all_fast = (1.0 - pi).powi(s as i32);
                (1.0 - all_fast) * (shift - c * kappa1).exp() + all_fast * (shift - c * kappa2).exp()
            }
            HierarchicalRateModel::TruncatedExponential { mu0, truncation } => {
                let k = s as f64 * mu0;
                k / (k + c) * (shift - c * truncation).exp()
            }
        }
    }

    /// E[(μ_1 + … + μ_s)·exp(shift − c·Y_s)].
    pub fn rate_sum_min_laplace_shifted(&self, s: usize, c: f64, shift: f64) -> f64 {
        match *self {
            HierarchicalRateModel::TwoClass { kappa1, kappa2, pi } => {
                // k slow-class servers among s.
                let mut acc = 0.0;
                for k in 0..=s {
                    let prob = binomial_coefficient(s, k) * pi.powi(k as i32) * (1.0 - pi).powi((s - k) as i32);
                    let sum = k as f64 * kappa1 + (s - k) as f64 * kappa2;
                    let min = if k >= 1 { kappa1 } else { kappa2 };
                    acc += prob * sum * (shift - c * min).exp();
                }
                acc
            }
            HierarchicalRateModel::TruncatedExponential { mu0, truncation } => {
                // μ_i = truncation + E_i. With M = min E_i ~ Exp(s·mu0), the s − 1
                // excesses over M are independent Exp(mu0), independent of M.
                let sf = s as f64;
                let k = sf * mu0;
                let l0 = k / (k + c);
                let l1 = k / ((k + c) * (k + c));
                let base = sf * truncation + (sf - 1.0) / mu0;
                (shift - c * truncation).exp() * (base * l0 + sf * l1)
            }
        }
    }
}

pub(crate) fn binomial_coefficient(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn validation() {
        let exp1 = DistributionSpec::exponential(1.0).unwrap();
        assert!(FJSystemSpec::new(vec![], exp1, 1.0).is_err());
        assert!(FJSystemSpec::new(vec![ServerSpec::new(exp1, 1.2)], exp1, 1.0).is_err());
        assert!(FJSystemSpec::homogeneous(2, exp1, exp1, 1.5).is_err());
        let zero = DistributionSpec::Deterministic { value: 0.0 };
        assert!(FJSystemSpec::homogeneous(1, zero, exp1, 1.0).is_err());
    }

    #[test]
    fn two_class_ordering() {
        let m = HierarchicalRateModel::TwoClass { kappa1: 2.0, kappa2: 1.0, pi: 0.5 };
        assert!(matches!(m.validate(0.1), Err(FjError::ParameterOrder(_))));
        let m = HierarchicalRateModel::TwoClass { kappa1: 1.0, kappa2: 2.0, pi: 0.5 };
        assert!(matches!(m.validate(1.0), Err(FjError::ParameterOrder(_))));
        assert!(m.validate(0.5).is_ok());
    }

    #[test]
    fn binomial_coefficients() {
        assert_eq!(binomial_coefficient(5, 2), 10.0);
        assert_eq!(binomial_coefficient(20, 10), 184756.0);
        assert_eq!(binomial_coefficient(3, 4), 0.0);
    }

    #[test]
    fn order_statistic_moments_match_monte_carlo() {
        let models = [
            HierarchicalRateModel::TwoClass { kappa1: 0.5, kappa2: 1.0, pi: 0.5 },
            HierarchicalRateModel::TruncatedExponential { mu0: 1.5, truncation: 0.4 },
        ];
        let (s, c) = (4usize, 0.8);
        let n = 400_000;
        for (i, m) in models.iter().enumerate() {
            let mut rng = stream_rng(11, i as u64);
            let (mut a0, mut a1) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for _ in 0..n {
                let rates: Vec<f64> = (0..s).map(|_| m.sample_rate(&mut rng)).collect();
                let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
                let w = (-c * min).exp();
                a0.push(w);
                a1.push(rates.iter().sum::<f64>() * w);
            }
            for (samples, exact) in [
                (a0, m.min_rate_laplace_shifted(s, c, 0.0)),
                (a1, m.rate_sum_min_laplace_shifted(s, c, 0.0)),
            ] {
                let mean = samples.iter().sum::<f64>() / n as f64;
                let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let se = (var / n as f64).sqrt();
                assert!((mean - exact).abs() < 5.0 * se, "model {i}: {mean} vs {exact}");
            }
        }
    }
}
