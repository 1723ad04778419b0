//! Decay rates θ_n solving α(θ)β(θ) = 1 for a few server/arrival pairs.

use fjlab::decay::{decay_rate, decay_rates};
use fjlab::distributions::DistributionSpec;
use fjlab::system::{FJSystemSpec, ServerSpec};

fn main() -> Result<(), fjlab::error::FjError> {
    let arrival = DistributionSpec::exponential(0.9)?;
    let spot = DistributionSpec::uniform(0.001, 2.009)?;
    let on_demand = DistributionSpec::exponential(1.0)?;

    let system = FJSystemSpec::new(vec![ServerSpec::always(on_demand), ServerSpec::always(spot)], arrival, 1.0)?;
    let rates = decay_rates(&system)?;
    for (n, theta) in rates.per_server.iter().enumerate() {
        println!("server {n}: theta = {theta:.6}");
    }
    println!("theta_tilde = {:.6}", rates.theta_tilde);

    println!("\nscaled exponential servers, mu = 1, lambda = 0.9 (theta = s^phi - 0.9)");
    for phi in [0.0, 0.5, 1.0] {
        let row: Vec<String> = (1..=5)
            .map(|s| decay_rate(&on_demand.scaled(s, phi), &arrival).map(|t| format!("{t:.4}")))
            .collect::<Result<_, _>>()?;
        println!("phi = {phi}: {}", row.join("  "));
    }

    println!("\nthinning the slowest server of (1.5, 1.25, 1), lambda = 0.5");
    for pi in [0.0, 0.5, 1.0] {
        let thinned = DistributionSpec::exponential(1.0)?.thinned(pi);
        println!("pi = {pi}: theta = {:.6}", decay_rate(&thinned, &DistributionSpec::exponential(0.5)?)?);
    }
    Ok(())
}
