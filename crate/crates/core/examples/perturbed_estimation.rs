//! Sample SIC outcomes from a perturbed four-qubit state and estimate energies
//! through the identity, the inverse perturbation and a random unitary layer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use virtmap::cone::MapCircuit;
use virtmap::densesim::{apply_circuit, exact_ground_energy, perturbation_circuit, sample_outcomes, DensityMatrix};
use virtmap::estimation::{estimate, EstimateOptions};
use virtmap::maps::LocalMap;
use virtmap::pauli::{expectation_oracle, xx_hamiltonian};
use virtmap::povm::{compute_duals, SingleQubitPovm};

fn main() -> virtmap::error::Result<()> {
    let n = 4;
    let h = xx_hamiltonian(n, 1.0, 0.5, true)?;
    let (_, psi) = exact_ground_energy(&h)?;
    let rho0 = DensityMatrix::from_pure(&psi)?;
    let perturbation = perturbation_circuit(n, 0.05, 7)?;
    let rho = apply_circuit(&rho0, &perturbation)?;

    let povm = SingleQubitPovm::sic();
    let duals = vec![compute_duals(&povm)?; n];
    let batch = sample_outcomes(&rho, &vec![povm; n], 20_000, 3)?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let unitary = MapCircuit::brickwork(n, 1, Some(vec![LocalMap::random_unitary(2, &mut rng), LocalMap::random_unitary(2, &mut rng)]))?;
    let circuits = [
        ("identity", MapCircuit::brickwork(n, 1, None)?),
        ("inverse", perturbation.inverse()?),
        ("unitary", unitary),
    ];
    for (name, circuit) in &circuits {
        let est = estimate(&batch, &duals, circuit, &h, EstimateOptions::default())?;
        let exact = expectation_oracle(&apply_circuit(&rho, circuit)?, &h)?.re;
        println!("{name:>8}: {:.4} ± {:.4}  exact {exact:.4}", est.value, est.sigma);
    }
    println!("unperturbed energy {:.4}", expectation_oracle(&rho0, &h)?.re);
    Ok(())
}
