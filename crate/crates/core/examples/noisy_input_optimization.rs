//! Optimise a staircase layer on a noisy copy of the XX ground state and
//! compare with the same layer acting on |0…0⟩.

use virtmap::cone::MapCircuit;
use virtmap::densesim::{exact_ground_energy, noisy_cnot_echo, DensityMatrix};
use virtmap::pauli::xx_hamiltonian;
use virtmap::varopt::{classical_ansatz, energy, sweep, AnsatzInit, SweepOptions, TrainingData};

fn main() -> virtmap::error::Result<()> {
    let n = 6;
    let h = xx_hamiltonian(n, 1.0, 0.0, true)?;
    let (e0, psi) = exact_ground_energy(&h)?;
    let noisy = noisy_cnot_echo(&DensityMatrix::from_pure(&psi)?, 0.05, 1e-3)?;
    let data = TrainingData::State(noisy);
    let circuit = MapCircuit::staircase(n, 1, None)?;
    println!("E0 {e0:.6}  noisy input {:.6}", energy(&circuit, &data, &h)?);

    let opts = SweepOptions { rounds: 30, ..SweepOptions::default() };
    let (report, _) = sweep(&circuit, &data, &h, &opts)?;
    println!("optimised on noisy input {:.6} ({} installs)", report.final_energy(), report.installed());

    let (classical, _) = classical_ansatz(n, &h, 1, AnsatzInit::RandomUnitary(0), &opts)?;
    println!("optimised on |0…0⟩       {:.6}", classical.final_energy());
    Ok(())
}
