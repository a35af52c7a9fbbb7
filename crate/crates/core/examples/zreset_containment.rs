//! Prefixing Z-resets turns any circuit acting on |0…0⟩ into one that gives
//! the same energy on an arbitrary input.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use virtmap::densesim::DensityMatrix;
use virtmap::linalg::random_density;
use virtmap::pauli::xx_hamiltonian;
use virtmap::varopt::{classical_ansatz, energy, zreset_compose, AnsatzInit, SweepOptions, TrainingData};

fn main() -> virtmap::error::Result<()> {
    let n = 5;
    let h = xx_hamiltonian(n, 1.0, 0.8, true)?;
    let opts = SweepOptions { rounds: 10, ..SweepOptions::default() };
    let (_, circuit) = classical_ansatz(n, &h, 1, AnsatzInit::RandomUnitary(1), &opts)?;
    let reset = zreset_compose(&circuit)?;

    let zero = TrainingData::State(DensityMatrix::zero_state(n));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let other = TrainingData::State(DensityMatrix::new(random_density(&mut rng, 1 << n))?);
    println!("circuit on |0…0⟩        {:.12}", energy(&circuit, &zero, &h)?);
    println!("reset circuit, random ρ {:.12}", energy(&reset, &other, &h)?);
    println!("plain circuit, random ρ {:.12}", energy(&circuit, &other, &h)?);
    Ok(())
}
