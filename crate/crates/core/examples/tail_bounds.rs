//! Waiting and response tail bounds for a spot + on-demand pair, and the
//! σ at which each bound reaches 10^-3.

use fjlab::bounds::{BoundModel, Metric};
use fjlab::distributions::DistributionSpec;
use fjlab::system::{FJSystemSpec, ServerSpec};

fn main() -> Result<(), fjlab::error::FjError> {
    let on_demand = ServerSpec::always(DistributionSpec::exponential(1.0)?);
    let spot = ServerSpec::always(DistributionSpec::uniform(0.001, 2.009)?);
    let arrival = DistributionSpec::exponential(0.9)?;

    for (label, servers) in [
        ("on-demand only", vec![on_demand]),
        ("spot only", vec![spot]),
        ("spot + on-demand", vec![on_demand, spot]),
    ] {
        let model = BoundModel::general(&FJSystemSpec::new(servers, arrival, 1.0)?)?;
        let sigmas: Vec<f64> = (0..=8).map(|k| 5.0 * k as f64).collect();
        let curve = model.curve(&sigmas)?;
        println!("{label} (theta_tilde = {:.4})", curve.theta_tilde.unwrap_or(f64::NAN));
        for (sigma, b) in &curve.points {
            println!("  sigma {sigma:>4}: P(W >= sigma) <= {:.4e}   P(R >= sigma) <= {:.4e}", b.waiting, b.response);
        }
        println!(
            "  99.9% quantile bounds: waiting {:.2}, response {:.2}",
            model.invert(Metric::Waiting, 1e-3)?,
            model.invert(Metric::Response, 1e-3)?
        );
    }
    Ok(())
}
