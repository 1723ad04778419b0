//! Parametric service and inter-arrival distributions.
//!
//! Every family carries an exact moment generating function, an exact
//! Laplace transform, its mean and a sampler driven by an explicit RNG.
//! Analytic bounds need exact transforms, so the family set is closed.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{FjError, Result};

/// Below this value of |θ(b−a)| the uniform MGF switches to a Taylor expansion.
const UNIFORM_TAYLOR_CUTOFF: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Exponential { rate: f64 },
    Uniform { a: f64, b: f64 },
    Deterministic { value: f64 },
}

impl DistributionSpec {
    pub fn exponential(rate: f64) -> Result<Self> {
        let d = DistributionSpec::Exponential { rate };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        let d = DistributionSpec::Uniform { a, b };
        d.validate()?;
        Ok(d)
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        let d = DistributionSpec::Deterministic { value };
        d.validate()?;
        Ok(d)
    }

    /// Checks the parameter ranges. A zero deterministic value is allowed here;
    /// use [`DistributionSpec::validate_service`] where a positive mean is required.
    pub fn validate(&self) -> Result<()> {
        match *self {
            DistributionSpec::Exponential { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(FjError::invalid(format!("exponential rate must be > 0, got {rate}")));
                }
            }
            DistributionSpec::Uniform { a, b } => {
                if !(a >= 0.0 && b > a && b.is_finite()) {
                    return Err(FjError::invalid(format!("uniform needs 0 <= a < b, got [{a}, {b}]")));
                }
            }
            DistributionSpec::Deterministic { value } => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(FjError::invalid(format!("deterministic value must be >= 0, got {value}")));
                }
            }
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate) but also rejects a zero mean.
    pub fn validate_service(&self) -> Result<()> {
        self.validate()?;
        if self.mean() <= 0.0 {
            return Err(FjError::invalid("service distribution must have a positive mean"));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DistributionSpec::Exponential { rate } => 1.0 / rate,
            DistributionSpec::Uniform { a, b } => 0.5 * (a + b),
            DistributionSpec::Deterministic { value } => value,
        }
    }

    /// Supremum of the MGF domain: `rate` for exponentials, `+∞` otherwise.
    pub fn mgf_boundary(&self) -> f64 {
        match *self {
            DistributionSpec::Exponential { rate } => rate,
            _ => f64::INFINITY,
        }
    }

    /// E[e^{θX}].
    pub fn mgf(&self, theta: f64) -> Result<f64> {
        match *self {
            DistributionSpec::Exponential { rate } => {
                if theta >= rate {
                    return Err(FjError::Domain { theta, boundary: rate });
                }
                Ok(rate / (rate - theta))
            }
            DistributionSpec::Uniform { a, b } => Ok(uniform_exp_mean(theta, a, b)),
            DistributionSpec::Deterministic { value } => Ok((theta * value).exp()),
        }
    }

    /// E[e^{−θX}] for θ ≥ 0.
    pub fn laplace(&self, theta: f64) -> Result<f64> {
        if theta < 0.0 {
            return Err(FjError::Domain { theta, boundary: 0.0 });
        }
        Ok(match *self {
            DistributionSpec::Exponential { rate } => rate / (rate + theta),
            DistributionSpec::Uniform { a, b } => uniform_exp_mean(-theta, a, b),
            DistributionSpec::Deterministic { value } => (-theta * value).exp(),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DistributionSpec::Exponential { rate } => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            DistributionSpec::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            DistributionSpec::Deterministic { value } => value,
        }
    }

    /// Applies the `s^φ` service-time scaling.
    pub fn scaled(self, servers: usize, phi: f64) -> TransformedDistribution {
        TransformedDistribution {
            base: self,
            scale_divisor: (servers as f64).powf(phi),
            thin_probability: 1.0,
        }
    }

    /// Service time equal to `X` with probability `pi` and `0` otherwise.
    pub fn thinned(self, pi: f64) -> TransformedDistribution {
        TransformedDistribution { base: self, scale_divisor: 1.0, thin_probability: pi }
    }
}

/// E[e^{tU}] for U uniform on [a, b]; the θ → 0 limit is handled by a Taylor series.
fn uniform_exp_mean(t: f64, a: f64, b: f64) -> f64 {
    let x = t * (b - a);
    let ratio = if x.abs() < UNIFORM_TAYLOR_CUTOFF {
        1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0
    } else {
        x.exp_m1() / x
    };
    (t * a).exp() * ratio
}

/// A base distribution divided by `scale_divisor` and thinned to zero with
/// probability `1 − thin_probability`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformedDistribution {
    pub base: DistributionSpec,
    pub scale_divisor: f64,
    pub thin_probability: f64,
}

impl TransformedDistribution {
    pub fn new(base: DistributionSpec, scale_divisor: f64, thin_probability: f64) -> Result<Self> {
        base.validate()?;
        if !(scale_divisor > 0.0 && scale_divisor.is_finite()) {
            return Err(FjError::invalid(format!("scale divisor must be > 0, got {scale_divisor}")));
        }
        if !(0.0..=1.0).contains(&thin_probability) {
            return Err(FjError::invalid(format!(
                "thinning probability must lie in [0, 1], got {thin_probability}"
            )));
        }
        Ok(Self { base, scale_divisor, thin_probability })
    }

    pub fn identity(base: DistributionSpec) -> Self {
        Self { base, scale_divisor: 1.0, thin_probability: 1.0 }
    }

    pub fn with_thinning(mut self, pi: f64) -> Self {
        self.thin_probability = pi;
        self
    }

    pub fn mean(&self) -> f64 {
        self.thin_probability * self.base.mean() / self.scale_divisor
    }

    /// Mean of the scaled but unthinned service time.
    pub fn unthinned_mean(&self) -> f64 {
        self.base.mean() / self.scale_divisor
    }

    pub fn mgf_boundary(&self) -> f64 {
        if self.thin_probability == 0.0 {
            f64::INFINITY
        } else {
            self.base.mgf_boundary() * self.scale_divisor
        }
    }

    /// (1−π) + π·α_base(θ / scale_divisor).
    pub fn mgf(&self, theta: f64) -> Result<f64> {
        let pi = self.thin_probability;
        if pi == 0.0 {
            return Ok(1.0);
        }
        let inner = self.base.mgf(theta / self.scale_divisor).map_err(|_| FjError::Domain {
            theta,
            boundary: self.mgf_boundary(),
        })?;
        Ok((1.0 - pi) + pi * inner)
    }

    /// MGF of the scaled service time with the thinning removed.
    pub fn unthinned_mgf(&self, theta: f64) -> Result<f64> {
        Self { thin_probability: 1.0, ..*self }.mgf(theta)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let pi = self.thin_probability;
        if pi < 1.0 && (pi == 0.0 || rng.random::<f64>() >= pi) {
            return 0.0;
        }
        self.base.sample(rng) / self.scale_divisor
    }
}

impl From<DistributionSpec> for TransformedDistribution {
    fn from(base: DistributionSpec) -> Self {
        Self::identity(base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    /// Composite Simpson's rule, used as an independent oracle for the uniform MGF.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = if n % 2 == 1 { n + 1 } else { n };
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn exponential_mgf_values() {
        let d = DistributionSpec::exponential(1.0).unwrap();
        assert_eq!(d.mgf(0.0).unwrap(), 1.0);
        assert!(close(d.mgf(0.9).unwrap(), 10.0, 1e-12));
        assert!(matches!(d.mgf(1.0), Err(FjError::Domain { .. })));
        assert!(matches!(d.mgf(1.5), Err(FjError::Domain { .. })));
    }

    #[test]
    fn uniform_mgf_matches_quadrature() {
        let (a, b, theta) = (0.001, 2.009, 0.5);
        let d = DistributionSpec::uniform(a, b).unwrap();
        let oracle = simpson(|x| (theta * x).exp() / (b - a), a, b, 20_000);
        assert!((d.mgf(theta).unwrap() - oracle).abs() < 1e-10, "{} vs {oracle}", d.mgf(theta).unwrap());
    }

    #[test]
    fn uniform_mgf_near_zero_is_continuous() {
        let d = DistributionSpec::uniform(0.001, 2.009).unwrap();
        assert_eq!(d.mgf(0.0).unwrap(), 1.0);
        for &t in &[1e-9, 4.9e-7, 5.1e-7, 1e-5] {
            let series = d.mgf(t).unwrap();
            let direct = ((t * 2.009).exp() - (t * 0.001).exp()) / (t * 2.008);
            assert!((series - direct).abs() < 1e-8, "theta {t}");
        }
    }

    #[test]
    fn laplace_values() {
        let d = DistributionSpec::exponential(0.9).unwrap();
        assert_eq!(d.laplace(0.0).unwrap(), 1.0);
        assert!(close(d.laplace(0.1).unwrap(), 0.9, 1e-15));
        let det = DistributionSpec::deterministic(2.0).unwrap();
        assert!(close(det.laplace(0.5).unwrap(), (-1.0f64).exp(), 1e-15));
        assert!(d.laplace(-0.1).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DistributionSpec::exponential(0.0).is_err());
        assert!(DistributionSpec::uniform(1.0, 1.0).is_err());
        assert!(DistributionSpec::uniform(-1.0, 1.0).is_err());
        assert!(DistributionSpec::deterministic(0.0).unwrap().validate_service().is_err());
        let base = DistributionSpec::exponential(1.0).unwrap();
        assert!(TransformedDistribution::new(base, 0.0, 1.0).is_err());
        assert!(TransformedDistribution::new(base, 1.0, 1.5).is_err());
    }

    #[test]
    fn sampling_basics() {
        let mut rng = stream_rng(7, 0);
        let det = DistributionSpec::deterministic(2.0).unwrap();
        assert_eq!(det.sample(&mut rng), 2.0);
        let never = DistributionSpec::exponential(1.0).unwrap().thinned(0.0);
        assert!((0..1000).all(|_| never.sample(&mut rng) == 0.0));
    }

    #[test]
    fn exponential_sample_mean() {
        let mut rng = stream_rng(2024, 0);
        let d = DistributionSpec::exponential(1.0).unwrap();
        let n = 1_000_000;
        let mean = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        // Five standard errors of an Exp(1) mean over 10^6 draws.
        assert!((mean - 1.0).abs() < 5.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn empirical_mgf_matches_analytic() {
        let n = 1_000_000;
        let cases = [
            (DistributionSpec::exponential(2.0).unwrap().scaled(3, 0.5), 1.0),
            (DistributionSpec::uniform(0.001, 2.009).unwrap().thinned(0.4), 0.7),
        ];
        for (i, (d, theta)) in cases.into_iter().enumerate() {
            let mut rng = stream_rng(99, i as u64);
            let vals: Vec<f64> = (0..n).map(|_| (theta * d.sample(&mut rng)).exp()).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            let exact = d.mgf(theta).unwrap();
            assert!((mean - exact).abs() < 5.0 * se, "case {i}: {mean} vs {exact}");
        }
    }

    fn any_distribution() -> impl Strategy<Value = DistributionSpec> {
        prop_oneof![
            (0.2f64..5.0).prop_map(|rate| DistributionSpec::Exponential { rate }),
            (0.0f64..2.0, 0.01f64..3.0).prop_map(|(a, w)| DistributionSpec::Uniform { a, b: a + w }),
            (0.01f64..3.0).prop_map(|value| DistributionSpec::Deterministic { value }),
        ]
    }

    proptest! {
        #[test]
        fn jensen_lower_bound(d in any_distribution(), frac in 0.0f64..0.95) {
            let theta = if d.mgf_boundary().is_finite() { frac * d.mgf_boundary() } else { frac * 3.0 };
            let m = d.mgf(theta).unwrap();
            prop_assert!(m >= (theta * d.mean()).exp() * (1.0 - 1e-12));
        }

        #[test]
        fn thinning_identity(d in any_distribution(), pi in 0.0f64..=1.0, frac in 0.0f64..0.95) {
            let theta = if d.mgf_boundary().is_finite() { frac * d.mgf_boundary() } else { frac * 3.0 };
            let lhs = d.thinned(pi).mgf(theta).unwrap();
            let rhs = (1.0 - pi) + pi * d.mgf(theta).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }

        #[test]
        fn scaling_identity(d in any_distribution(), s in 1usize..20, phi in 0.0f64..=1.0, frac in 0.0f64..0.95) {
            let theta = if d.mgf_boundary().is_finite() { frac * d.mgf_boundary() } else { frac * 3.0 };
            let lhs = d.scaled(s, phi).mgf(theta).unwrap();
            let rhs = d.mgf(theta / (s as f64).powf(phi)).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
    }
}
