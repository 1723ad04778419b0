//! Exponential decay rates from the MGF fixed-point condition α(θ)·β(θ) = 1.

use serde::{Deserialize, Serialize};

use crate::distributions::{DistributionSpec, TransformedDistribution};
use crate::error::{FjError, Result};
use crate::system::FJSystemSpec;

/// Offset kept from the ends of the bracket.
const BRACKET_EPS: f64 = 1e-12;
/// Upper bracket cap for transforms with an unbounded MGF domain.
const MAX_UNBOUNDED_BRACKET: f64 = 1e8;
const MAX_BRENT_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRates {
    /// θ_n per server; `+∞` for servers that are never selected.
    pub per_server: Vec<f64>,
    /// Minimum over the finite per-server rates.
    pub theta_tilde: f64,
}

impl DecayRates {
    /// Finite rates with their server index.
    pub fn finite(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.per_server.iter().copied().enumerate().filter(|(_, t)| t.is_finite())
    }
}

/// Strict stability: every server's mean service time is below the mean inter-arrival time.
pub fn check_stability(system: &FJSystemSpec) -> bool {
    let arrival_mean = system.arrival.mean();
    system.servers.iter().all(|s| s.service.mean() < arrival_mean)
}

/// Positive root of α(x)·β(x) = 1.
///
/// `boundary` is the supremum of α's domain (`+∞` when unbounded). Domain errors
/// from `alpha` are treated as an overshoot and shrink the upper bracket.
pub fn solve_theta<A, B>(alpha: A, beta: B, boundary: f64) -> Result<f64>
where
    A: Fn(f64) -> Result<f64>,
    B: Fn(f64) -> Result<f64>,
{
    let f = |x: f64| -> f64 {
        match (alpha(x), beta(x)) {
            (Ok(a), Ok(b)) => {
                let v = a * b - 1.0;
                if v.is_nan() {
                    f64::INFINITY
                } else {
                    v
                }
            }
            _ => f64::INFINITY,
        }
    };
    let no_root = |reason: &str| FjError::NoRoot { server: 0, reason: reason.to_string() };

    let mut hi = if boundary.is_finite() {
        boundary - BRACKET_EPS * boundary.max(1.0)
    } else {
        1.0
    };
    let mut f_hi = f(hi);
    if !boundary.is_finite() {
        while f_hi <= 0.0 {
            hi *= 2.0;
            if hi > MAX_UNBOUNDED_BRACKET {
                return Err(no_root("alpha*beta stays below 1; the system is not stable"));
            }
            f_hi = f(hi);
        }
    } else if f_hi <= 0.0 {
        return Err(no_root("alpha*beta stays below 1 up to the MGF domain boundary"));
    }

    // Walk down towards 0 until the product drops below 1.
    let mut lo = hi;
    let mut f_lo = f_hi;
    while f_lo >= 0.0 {
        hi = lo;
        f_hi = f_lo;
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(no_root("alpha*beta never drops below 1; the system is not stable"));
        }
        f_lo = f(lo);
    }
    brent(&f, lo, hi, f_lo, f_hi).ok_or_else(|| no_root("root refinement did not converge"))
}

/// Brent's method on a sign-changing bracket.
fn brent(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> Option<f64> {
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_BRENT_ITERATIONS {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * BRACKET_EPS * 1e-3;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Some(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() && fb.is_finite() && fa.is_finite() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    None
}

/// Decay rate of a single (possibly scaled or thinned) server against an arrival process.
pub fn decay_rate(service: &TransformedDistribution, arrival: &DistributionSpec) -> Result<f64> {
    if service.thin_probability == 0.0 {
        return Ok(f64::INFINITY);
    }
    if !(service.mean() < arrival.mean()) {
        return Err(FjError::NoRoot {
            server: 0,
            reason: format!(
                "mean work {} per job is not below the mean inter-arrival time {}",
                service.mean(),
                arrival.mean()
            ),
        });
    }
    solve_theta(|x| service.mgf(x), |x| arrival.laplace(x), service.mgf_boundary())
}

/// Per-server decay rates using the thinned MGF (1 − π_n) + π_n·α_n.
pub fn decay_rates(system: &FJSystemSpec) -> Result<DecayRates> {
    let per_server = system
        .servers
        .iter()
        .enumerate()
        .map(|(i, s)| {
            decay_rate(&s.thinned_service(), &system.arrival).map_err(|e| match e {
                FjError::NoRoot { reason, .. } => FjError::NoRoot { server: i, reason },
                other => other,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let theta_tilde = per_server.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DecayRates { per_server, theta_tilde })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::ServerSpec;

    fn exp(rate: f64) -> DistributionSpec {
        DistributionSpec::exponential(rate).unwrap()
    }

    fn residual(service: &TransformedDistribution, arrival: &DistributionSpec, theta: f64) -> f64 {
        (service.mgf(theta).unwrap() * arrival.laplace(theta).unwrap() - 1.0).abs()
    }

    #[test]
    fn stability_examples() {
        let fig3 = FJSystemSpec::new(
            vec![ServerSpec::always(exp(1.5)), ServerSpec::always(exp(1.25)), ServerSpec::always(exp(1.0))],
            exp(0.5),
            1.0,
        )
        .unwrap();
        assert!(check_stability(&fig3));
        assert!(!check_stability(&FJSystemSpec::homogeneous(1, exp(1.0), exp(1.0), 1.0).unwrap()));
        let det = DistributionSpec::deterministic(2.0).unwrap();
        assert!(!check_stability(&FJSystemSpec::homogeneous(1, det, exp(0.9), 1.0).unwrap()));
    }

    #[test]
    fn exponential_pairs() {
        let theta = decay_rate(&exp(1.0).into(), &exp(0.9)).unwrap();
        assert!((theta - 0.1).abs() < 1e-9);
        let theta_s = decay_rate(&exp(1.0).scaled(2, 1.0), &exp(0.9)).unwrap();
        assert!((theta_s - 1.1).abs() < 1e-9);
    }

    #[test]
    fn uniform_root_matches_grid_scan() {
        let service: TransformedDistribution = DistributionSpec::uniform(0.001, 2.009).unwrap().into();
        let arrival = exp(0.9);
        let theta = decay_rate(&service, &arrival).unwrap();
        assert!(residual(&service, &arrival, theta) <= 1e-10);
        // Independent oracle: first sign change of α·β − 1 on a 1e-3 grid.
        let g = |x: f64| service.mgf(x).unwrap() * arrival.laplace(x).unwrap() - 1.0;
        let k = (1..100_000).find(|&k| g(k as f64 * 1e-3) > 0.0).unwrap();
        let (lo, hi) = ((k - 1) as f64 * 1e-3, k as f64 * 1e-3);
        assert!(theta > lo && theta <= hi, "{theta} not in ({lo}, {hi}]");
    }

    #[test]
    fn unstable_pairs_have_no_root() {
        assert!(matches!(decay_rate(&exp(1.0).into(), &exp(1.0)), Err(FjError::NoRoot { .. })));
        let det = DistributionSpec::deterministic(2.0).unwrap();
        assert!(decay_rate(&det.into(), &exp(0.9)).is_err());
    }

    #[test]
    fn rates_for_systems() {
        let sys = FJSystemSpec::homogeneous(2, exp(1.0), exp(0.9), 1.0).unwrap();
        let r = decay_rates(&sys).unwrap();
        assert!(r.per_server.iter().all(|t| (t - 0.1).abs() < 1e-9));
        assert!((r.theta_tilde - 0.1).abs() < 1e-9);

        let sys = FJSystemSpec::new(
            vec![ServerSpec::always(exp(2.0)), ServerSpec::new(exp(1.0), 0.0)],
            exp(0.9),
            1.0,
        )
        .unwrap();
        let r = decay_rates(&sys).unwrap();
        assert!(r.per_server[1].is_infinite());
        assert!((r.theta_tilde - 1.1).abs() < 1e-9);
        assert_eq!(r.finite().count(), 1);
    }

    #[test]
    fn spot_and_on_demand_minimum_is_the_exponential_server() {
        let spot = exp(1.0);
        let on_demand = DistributionSpec::uniform(0.001, 2.009).unwrap();
        let sys = FJSystemSpec::new(vec![ServerSpec::always(spot), ServerSpec::always(on_demand)], exp(0.9), 1.0)
            .unwrap();
        let r = decay_rates(&sys).unwrap();
        assert_eq!(r.theta_tilde, r.per_server[0]);
        assert!(r.per_server[1] > r.per_server[0]);
        for (i, s) in sys.servers.iter().enumerate() {
            assert!(residual(&s.thinned_service(), &sys.arrival, r.per_server[i]) <= 1e-10);
        }
    }

    #[test]
    fn offending_server_is_reported() {
        let sys = FJSystemSpec::new(
            vec![ServerSpec::always(exp(2.0)), ServerSpec::always(exp(0.5))],
            exp(0.9),
            1.0,
        )
        .unwrap();
        assert!(matches!(decay_rates(&sys), Err(FjError::NoRoot { server: 1, .. })));
    }

    #[test]
    fn thinned_roots_satisfy_fixed_point() {
        for &pi in &[0.01, 0.2, 0.5, 0.9] {
            for &mu in &[0.5, 1.0, 3.0] {
                let service = exp(mu).thinned(pi);
                let arrival = exp(0.45);
                if service.mean() >= arrival.mean() {
                    continue;
                }
                let theta = decay_rate(&service, &arrival).unwrap();
                assert!(theta > 0.0 && theta < mu);
                assert!(residual(&service, &arrival, theta) <= 1e-10, "pi {pi} mu {mu}");
            }
        }
    }

    #[test]
    fn monotone_in_service_rate() {
        let arrival = exp(0.7);
        let mut prev = 0.0;
        for k in 0..40 {
            let mu = 0.75 + 0.1 * k as f64;
            let t = decay_rate(&exp(mu).into(), &arrival).unwrap();
            assert!(t >= prev);
            prev = t;
        }
        let det = DistributionSpec::deterministic(0.8).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let lambda = 0.1 + 0.05 * k as f64;
            let t = decay_rate(&det.into(), &exp(lambda)).unwrap();
            assert!(t <= prev);
            prev = t;
        }
    }
}
