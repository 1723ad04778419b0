//! Simulated waiting-time CCDF of a two-class system next to its bound.

use fjlab::bounds::{BoundModel, Metric};
use fjlab::distributions::DistributionSpec;
use fjlab::simulator::{simulate, SimulationConfig, REPORT_PERCENTILES};
use fjlab::strategies::StrategySpec;
use fjlab::system::{FJSystemSpec, HierarchicalRateModel};

fn main() -> Result<(), fjlab::error::FjError> {
    let n = 5;
    let system = FJSystemSpec::homogeneous(n, DistributionSpec::exponential(1.0)?, DistributionSpec::exponential(0.1)?, 0.2)?;
    let strategy = StrategySpec::binomial(n, 0.5)?;
    let rates = HierarchicalRateModel::TwoClass { kappa1: 0.5, kappa2: 1.0, pi: 0.5 };

    let model = BoundModel::for_system(&system, Some(&strategy), Some(&rates))?;
    let config = SimulationConfig::new(system, Some(strategy), 200_000, 8, 42).with_rate_model(rates);
    let result = simulate(&config)?;

    println!("{:>6} {:>12} {:>12} {:>10}", "sigma", "bound", "simulated", "std err");
    for k in 0..=10 {
        let sigma = 2.0 * k as f64;
        let bound = model.evaluate(sigma)?.waiting;
        let e = result.ccdf(Metric::Waiting, sigma)?;
        println!("{sigma:>6.1} {bound:>12.4e} {:>12.4e} {:>10.2e}", e.value, e.std_error);
    }
    let mean = result.mean(Metric::Waiting)?;
    println!("\nmean waiting {:.4} +- {:.4}", mean.value, mean.std_error);
    let pct = result.percentiles(Metric::Waiting, &REPORT_PERCENTILES)?;
    for (q, v) in REPORT_PERCENTILES.iter().zip(pct) {
        println!("p{:<5} {v:.4}", q * 100.0);
    }
    println!("99.9% bound quantile {:.4}", model.invert(Metric::Waiting, 1e-3)?);
    Ok(())
}
