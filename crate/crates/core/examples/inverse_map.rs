//! Invert a weak depolarising layer with a non-positive map and recover the
//! noiseless expectation value from exact outcome probabilities.

use virtmap::cone::MapCircuit;
use virtmap::densesim::{apply_circuit, DensityMatrix};
use virtmap::estimation::estimate_exact;
use virtmap::linalg::haar_unitary;
use virtmap::maps::LocalMap;
use virtmap::pauli::{expectation_oracle, Observable};
use virtmap::povm::{compute_duals, SingleQubitPovm};
use rand::SeedableRng;

fn main() -> virtmap::error::Result<()> {
    let n = 4;
    let noise = LocalMap::depolarizing(2, 0.1)?;
    let inverse = noise.inverse()?;
    println!("inverse map: CPTP {}  Choi min eigenvalue {:.4}", inverse.is_cptp(), inverse.choi().min_eigenvalue());

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let psi = haar_unitary(&mut rng, 1 << n).column(0).into_owned();
    let clean = DensityMatrix::from_pure(&psi)?;
    let noisy = apply_circuit(&clean, &MapCircuit::brickwork(n, 1, Some(vec![noise.clone(), noise]))?)?;

    let povm = SingleQubitPovm::sic();
    let duals = vec![compute_duals(&povm)?; n];
    let obs = Observable::from_real_terms(n, &[(1.0, "XXII"), (0.5, "IZZI"), (1.0, "IIYY")])?;
    let repair = MapCircuit::brickwork(n, 1, Some(vec![inverse.clone(), inverse]))?;
    let identity = MapCircuit::brickwork(n, 1, None)?;
    println!("noiseless  {:.10}", expectation_oracle(&clean, &obs)?.re);
    println!("noisy      {:.10}", estimate_exact(&noisy, &vec![povm.clone(); n], &duals, &identity, &obs)?);
    println!("recovered  {:.10}", estimate_exact(&noisy, &vec![povm; n], &duals, &repair, &obs)?);
    Ok(())
}
