//! Bounds with random server rates: two rate classes and truncated-exponential
//! rates, with the closed forms checked against the generic evaluation.

use fjlab::bounds::{bounds_hetero_general, waiting_bound_hierarchical, waiting_bound_twoclass, RateSource};
use fjlab::strategies::StrategySpec;
use fjlab::system::HierarchicalRateModel;

fn main() -> Result<(), fjlab::error::FjError> {
    let (n, lambda) = (5, 0.1);
    let two_class = HierarchicalRateModel::TwoClass { kappa1: 0.5, kappa2: 1.0, pi: 0.5 };
    println!("two classes (0.5, 1.0) w.p. 1/2, N = {n}, lambda = {lambda}");
    for p in [0.2, 0.5, 1.0] {
        let st = StrategySpec::binomial(n, p)?;
        for sigma in [5.0, 10.0, 20.0] {
            let closed = waiting_bound_twoclass(n, p, &two_class, lambda, sigma)?;
            let generic = bounds_hetero_general(&st, &RateSource::Model(two_class), 1.0, lambda, sigma)?;
            let partial = bounds_hetero_general(&st, &RateSource::Model(two_class), 0.2, lambda, sigma)?;
            println!(
                "  p {p} sigma {sigma:>4}: closed {closed:.4e}  generic {:.4e}  phi=0.2 {:.4e}",
                generic.waiting, partial.waiting
            );
        }
    }

    let truncated = HierarchicalRateModel::TruncatedExponential { mu0: 2.0, truncation: 0.5 };
    println!("\ntruncated-exponential rates (mu0 = 2, rates > 0.5), lambda = 0.5");
    for p in [0.2, 0.5, 1.0] {
        let st = StrategySpec::binomial(n, p)?;
        for sigma in [0.0, 5.0, 10.0] {
            let closed = waiting_bound_hierarchical(n, p, &truncated, sigma)?;
            let generic = bounds_hetero_general(&st, &RateSource::Model(truncated), 1.0, 0.5, sigma)?;
            println!("  p {p} sigma {sigma:>4}: closed {closed:.4e}  generic {:.4e}  response {:.4e}", generic.waiting, generic.response);
        }
    }
    Ok(())
}
