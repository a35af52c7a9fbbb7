//! Optimise a single staircase layer acting on |0…0⟩ for the periodic XX
//! chain and compare with exact diagonalisation.
//!
//! cargo run --release --example classical_ansatz -- [N] [B] [seeds]

use virtmap::densesim::exact_ground_energy;
use virtmap::pauli::xx_hamiltonian;
use virtmap::varopt::{classical_ansatz, AnsatzInit, SweepOptions};

fn main() -> virtmap::error::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().map_or(6, |s| s.parse().expect("N"));
    let b: f64 = args.get(1).map_or(0.95, |s| s.parse().expect("B"));
    let seeds: u64 = args.get(2).map_or(3, |s| s.parse().expect("seeds"));

    let h = xx_hamiltonian(n, 1.0, b, true)?;
    let (e0, _) = exact_ground_energy(&h)?;
    println!("N={n} B={b} E0={e0:.10}");

    let opts = SweepOptions { rounds: 60, ..SweepOptions::default() };
    let inits = std::iter::once(AnsatzInit::Identity).chain((0..seeds).map(AnsatzInit::RandomUnitary));
    for init in inits {
        let start = std::time::Instant::now();
        let (report, _) = classical_ansatz(n, &h, 1, init, &opts)?;
        let e = report.final_energy();
        println!(
            "{init:?}: E {:.8} -> {:.8}  rel.err {:.3e}  steps {}  installed {}  ({:.1}s)",
            report.initial_energy(),
            e,
            ((e - e0) / e0).abs(),
            report.steps.len(),
            report.installed(),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
