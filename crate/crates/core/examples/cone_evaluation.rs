//! Evaluate Tr[P Λ(⊗D)] on a 12-qubit brickwork circuit through the causal
//! cone and print the contraction schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use virtmap::cone::{evaluate_trace, evaluate_trace_backward, schedule, MapCircuit};
use virtmap::maps::LocalMap;
use virtmap::povm::{compute_duals, SingleQubitPovm};

fn main() -> virtmap::error::Result<()> {
    let n = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let maps = (0..11).map(|_| LocalMap::random_cptp(2, &mut rng)).collect();
    let circuit = MapCircuit::brickwork(n, 2, Some(maps))?;
    let plan = schedule(&circuit, None)?;
    println!("{plan}");

    let duals = compute_duals(&SingleQubitPovm::sic())?;
    let inputs: Vec<_> = (0..n).map(|q| *duals.dual(q % 4)).collect();
    let pauli = "IIIIIXZIIIII".parse()?;
    let f = evaluate_trace(&circuit, &inputs, &pauli)?;
    let b = evaluate_trace_backward(&circuit, &inputs, &pauli)?;
    println!("forward {f:.12}\nbackward {b:.12}");
    Ok(())
}
