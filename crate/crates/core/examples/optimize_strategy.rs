//! Strategy optimization: best pmf (a simplex vertex), best binomial p with
//! its monotonicity certificate, and the budget-constrained p*.

use fjlab::bounds::{BoundModel, Metric};
use fjlab::optimizer::{optimize_binomial_p, optimize_budget, optimize_pmf, RateInput};
use fjlab::strategies::StrategySpec;

fn main() -> Result<(), fjlab::error::FjError> {
    let (n, mu, lambda) = (10, 1.0, 0.9);

    for phi in [0.0, 0.2, 0.5, 1.0] {
        let reference = BoundModel::scaled(mu, lambda, StrategySpec::binomial(n, 1.0)?, phi)?;
        let sigma = reference.invert(Metric::Waiting, 1e-3)?;
        let vertex = optimize_pmf(n, &RateInput::Homogeneous(mu), lambda, phi, sigma, Metric::Waiting)?;
        let binomial = optimize_binomial_p(n, mu, lambda, phi, sigma, 1e-3, Metric::Waiting)?;
        println!(
            "phi {phi}: sigma {sigma:.3}, s* = {} (bound {:.3e}), p_opt = {:.4} (bound {:.3e}){}",
            vertex.servers,
            vertex.value,
            binomial.p_opt,
            binomial.value,
            match &binomial.certificate {
                Some(c) => format!(", certified = {} (Q(1) = {:.2})", c.certified, c.q_at_one),
                None => String::new(),
            }
        );
    }

    println!();
    for budget in [1.5, 3.0, 5.0, 9.9] {
        let opt = optimize_budget(n, budget, mu, lambda, 20.0)?;
        println!("budget E[S] <= {budget}: p* = {:.6}, E[S] = {:.6}, bound at sigma 20 = {:.4e}", opt.p_star, opt.expected_servers, opt.value);
    }
    Ok(())
}
