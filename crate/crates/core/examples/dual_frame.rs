//! Build the dual frame of the tetrahedral SIC-POVM and reconstruct a qubit
//! state from its exact outcome probabilities.

use virtmap::linalg::{c, Mat2};
use virtmap::povm::{compute_duals, sic_duals_closed_form, SingleQubitPovm};

fn main() -> virtmap::error::Result<()> {
    let povm = SingleQubitPovm::sic();
    let duals = compute_duals(&povm)?;
    for (m, (d, closed)) in duals.duals().iter().zip(sic_duals_closed_form()).enumerate() {
        println!(
            "D{m} = [{:.3} {:.3}; {:.3} {:.3}]  |D - closed form| {:.1e}",
            d[(0, 0)],
            d[(0, 1)],
            d[(1, 0)],
            d[(1, 1)],
            (d - closed).camax()
        );
    }

    let rho = Mat2::new(c(0.7, 0.0), c(0.1, -0.2), c(0.1, 0.2), c(0.3, 0.0));
    let p = povm.probabilities(&rho);
    println!("p = {p:.4?}");
    let recon = duals.reconstruct(&povm, &rho);
    println!("reconstruction error {:.1e}", (recon - rho).camax());
    Ok(())
}
