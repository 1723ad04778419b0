//! Parallelization versus synchronization: the 99.9% waiting-time bound of a
//! Bin(N, p) strategy across p for several scaling exponents φ.

use fjlab::bounds::{BoundModel, Metric};
use fjlab::strategies::StrategySpec;

fn main() -> Result<(), fjlab::error::FjError> {
    let (n, mu) = (10, 1.0);
    for lambda in [0.1, 0.9] {
        println!("N = {n}, mu = {mu}, lambda = {lambda}");
        println!("{:>6} {}", "p", [0.0, 0.2, 0.5, 1.0].map(|phi| format!("{:>12}", format!("phi={phi}"))).join(""));
        for k in 1..=10 {
            let p = k as f64 / 10.0;
            let mut row = format!("{p:>6.1} ");
            for phi in [0.0, 0.2, 0.5, 1.0] {
                let model = BoundModel::scaled(mu, lambda, StrategySpec::binomial(n, p)?, phi)?;
                row.push_str(&format!("{:>12.3}", model.invert(Metric::Waiting, 1e-3)?));
            }
            println!("{row}");
        }
        println!();
    }
    Ok(())
}
