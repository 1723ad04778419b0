//! The 99.9th waiting-time percentile grows like log N without scaling.

use fjlab::simulator::{percentile_growth_fit, GrowthAxis, SimulationConfig};
use fjlab::distributions::DistributionSpec;
use fjlab::strategies::StrategySpec;
use fjlab::system::FJSystemSpec;

fn main() -> Result<(), fjlab::error::FjError> {
    let configs = |p: f64| -> Result<Vec<SimulationConfig>, fjlab::error::FjError> {
        [2, 4, 8, 16, 32]
            .into_iter()
            .map(|n| {
                let system = FJSystemSpec::homogeneous(n, DistributionSpec::exponential(1.0)?, DistributionSpec::exponential(0.5)?, 0.0)?;
                Ok(SimulationConfig::new(system, Some(StrategySpec::binomial(n, p)?), 200_000, 2, 7))
            })
            .collect()
    };
    for (p, axis) in [(1.0, GrowthAxis::ServerCount), (0.5, GrowthAxis::ExpectedServers)] {
        let report = percentile_growth_fit(&configs(p)?, axis, 0.999)?;
        println!("p = {p}, x = {axis:?}");
        for (x, y) in &report.points {
            println!("  x {x:>7.3}  p99.9 {y:.3}");
        }
        println!(
            "  fit: {:.3} * ln x + {:.3}, R^2 = {:.4}",
            report.fit.slope,
            report.fit.intercept,
            report.fit.r_squared.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
