use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use virtmap::cone::{evaluate_trace, evaluate_trace_backward, schedule, MapCircuit, Topology};
use virtmap::densesim::{apply_circuit, perturbation_circuit, sample_outcomes, DensityMatrix, OutcomeBatch};
use virtmap::estimation::{estimate, estimate_exact, EstimateOptions};
use virtmap::linalg::{c, random_density};
use virtmap::maps::LocalMap;
use virtmap::pauli::{expectation_oracle, Observable, PauliString};
use virtmap::povm::{compute_duals, SingleQubitPovm};

fn random_circuit(n: usize, layers: usize, staircase: bool, seed: u64) -> MapCircuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topology = if staircase { Topology::Staircase } else { Topology::Brickwork };
    let maps = (0..MapCircuit::slot_count(topology, n, layers)).map(|_| LocalMap::random_cptp(2, &mut rng)).collect();
    if staircase { MapCircuit::staircase(n, layers, Some(maps)) } else { MapCircuit::brickwork(n, layers, Some(maps)) }
        .unwrap()
}

fn pauli_string(n: usize, letters: &[usize]) -> PauliString {
    letters.iter().take(n).map(|l| ['I', 'X', 'Y', 'Z'][*l]).collect::<String>().parse().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn schedules_respect_the_cap(n in 2usize..8, layers in 1usize..4, staircase: bool) {
        let circuit = random_circuit(n, layers, staircase, 0);
        let s = schedule(&circuit, None).unwrap();
        prop_assert!(s.peak_active() <= circuit.max_active());
    }

    #[test]
    fn forward_and_backward_agree(
        n in 2usize..7,
        layers in 1usize..3,
        staircase: bool,
        seed in 0u64..1000,
        letters in proptest::collection::vec(0usize..4, 7),
        outcomes in proptest::collection::vec(0usize..4, 7),
    ) {
        let circuit = random_circuit(n, layers, staircase, seed);
        let duals = compute_duals(&SingleQubitPovm::sic()).unwrap();
        let inputs: Vec<_> = outcomes.iter().take(n).map(|m| *duals.dual(*m)).collect();
        let pauli = pauli_string(n, &letters);
        let f = evaluate_trace(&circuit, &inputs, &pauli).unwrap();
        let b = evaluate_trace_backward(&circuit, &inputs, &pauli).unwrap();
        prop_assert!((f - b).norm() <= 1e-10 * (1.0 + f.norm()));
    }

    #[test]
    fn exact_estimate_matches_dense_simulation(n in 2usize..5, seed in 0u64..1000, letters in proptest::collection::vec(0usize..4, 4)) {
        let circuit = random_circuit(n, 2, seed % 2 == 0, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let rho = DensityMatrix::new(random_density(&mut rng, 1 << n)).unwrap();
        let obs = Observable::new(n, vec![(c(1.0, 0.0), pauli_string(n, &letters))]).unwrap();
        let povm = SingleQubitPovm::sic();
        let duals = vec![compute_duals(&povm).unwrap(); n];
        let exact = estimate_exact(&rho, &vec![povm; n], &duals, &circuit, &obs).unwrap();
        let dense = expectation_oracle(&apply_circuit(&rho, &circuit).unwrap(), &obs).unwrap().re;
        prop_assert!((exact - dense).abs() <= 1e-10);
    }

    #[test]
    fn estimates_are_linear_in_the_observable(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let n = 3;
        let povm = SingleQubitPovm::sic();
        let duals = vec![compute_duals(&povm).unwrap(); n];
        let rho = DensityMatrix::zero_state(n);
        let batch = sample_outcomes(&rho, &vec![povm; n], 300, seed).unwrap();
        let circuit = random_circuit(n, 1, false, seed);
        let o1 = Observable::from_real_terms(n, &[(1.0, "XXI")]).unwrap();
        let o2 = Observable::from_real_terms(n, &[(1.0, "IZZ")]).unwrap();
        let sum = Observable::from_real_terms(n, &[(a, "XXI"), (b, "IZZ")]).unwrap();
        let opts = EstimateOptions::default();
        let e1 = estimate(&batch, &duals, &circuit, &o1, opts).unwrap().value;
        let e2 = estimate(&batch, &duals, &circuit, &o2, opts).unwrap().value;
        let es = estimate(&batch, &duals, &circuit, &sum, opts).unwrap().value;
        prop_assert!((es - (a * e1 + b * e2)).abs() <= 1e-10 * (1.0 + es.abs()));
    }

    #[test]
    fn batches_round_trip_through_csv(n in 1usize..6, shots in 2usize..50, seed: u64) {
        let povm = SingleQubitPovm::sic();
        let batch = sample_outcomes(&DensityMatrix::maximally_mixed(n), &vec![povm; n], shots, seed).unwrap();
        let back = OutcomeBatch::from_csv(&batch.to_csv()).unwrap();
        prop_assert_eq!(back.outcomes(), batch.outcomes());
        prop_assert_eq!(back.seed(), batch.seed());
    }
}

#[test]
fn inverse_circuit_undoes_the_perturbation() {
    let n = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rho = DensityMatrix::new(random_density(&mut rng, 8)).unwrap();
    let forward = perturbation_circuit(n, 0.1, 11).unwrap();
    let inverse = forward.inverse().unwrap();
    let back = apply_circuit(&apply_circuit(&rho, &forward).unwrap(), &inverse).unwrap();
    assert!((back.matrix() - rho.matrix()).camax() < 1e-10);
}
