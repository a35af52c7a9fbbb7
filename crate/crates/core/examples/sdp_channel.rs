//! Minimise Re Tr[C M] over two-qubit CPTP Choi matrices for a random
//! Hermitian M and report the duality certificate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use virtmap::linalg::random_hermitian;
use virtmap::varopt::{minimize_over_cptp, LocalObjective, SdpOptions};

fn main() -> virtmap::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for arity in [1, 2] {
        let d = 1 << (2 * arity);
        let obj = LocalObjective { component: 0, arity, matrix: random_hermitian(&mut rng, d), offset: 0.0 };
        let sol = minimize_over_cptp(&obj, &SdpOptions::default(), None)?;
        println!(
            "k={arity}: value {:.9}  lower bound {:.9}  gap {:.1e}  TP residual {:.1e}  min eig {:.1e}  iters {}",
            sol.value,
            sol.lower_bound,
            sol.gap(),
            sol.tp_residual,
            sol.min_eigenvalue,
            sol.iterations
        );
    }
    Ok(())
}
