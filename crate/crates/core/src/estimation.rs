//! Shot weights, estimates with error bars, and covariances.
//!
//! A shot with outcome string `m` contributes
//! `ω_m = Re Σ_k c_k Tr[Λ(⊗_q D_{m_q}) P_k]`; the estimate is the mean weight
//! and its error bar `sqrt(V̄/S)` uses the unbiased sample variance.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{ConeEvaluator, MapCircuit};
use crate::densesim::{outcome_distribution, DensityMatrix, OutcomeBatch, ENUMERATION_MAX_QUBITS};
use crate::error::{Error, Result};
use crate::linalg::{Mat2, C64, ZERO};
use crate::pauli::Observable;
use crate::povm::{DualFrame, SingleQubitPovm};

/// Relative bound on the imaginary part of a weight for Hermitian observables.
pub const IMAG_RESIDUE_TOL: f64 = 1e-8;

/// Weighted product inputs `Σ_e w_e ⊗_q T_q[i_{e,q}]`: outcome strings with
/// their empirical or exact probabilities, or a single product state.
#[derive(Debug, Clone, PartialEq)]
pub struct InputEnsemble {
    num_qubits: usize,
    tables: Vec<Vec<Mat2>>,
    entries: Vec<(Vec<u8>, f64)>,
}

impl InputEnsemble {
    /// Unique outcome strings (sorted) weighted by their frequency.
    pub fn from_batch(batch: &OutcomeBatch, duals: &[DualFrame]) -> Result<Self> {
        let n = batch.num_qubits();
        check_duals(n, duals)?;
        if batch.shots() == 0 {
            return Err(Error::Invalid("empty outcome batch".into()));
        }
        let mut counts: BTreeMap<&[u8], usize> = BTreeMap::new();
        for row in batch.outcomes() {
            *counts.entry(row.as_slice()).or_default() += 1;
        }
        let s = batch.shots() as f64;
        let entries = counts.into_iter().map(|(k, v)| (k.to_vec(), v as f64 / s)).collect();
        Ok(Self { num_qubits: n, tables: dual_tables(duals), entries })
    }

    /// Every outcome string with nonzero probability.
    pub fn from_distribution(probs: &[f64], duals: &[DualFrame]) -> Result<Self> {
        let n = duals.len();
        if probs.len() != 1usize << (2 * n) {
            return Err(Error::Dimension(format!("distribution of length {} for {n} qubits", probs.len())));
        }
        let entries = probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p != 0.0)
            .map(|(idx, p)| ((0..n).map(|q| ((idx >> (2 * (n - 1 - q))) & 3) as u8).collect(), *p))
            .collect();
        Ok(Self { num_qubits: n, tables: dual_tables(duals), entries })
    }

    /// A single product operator with weight 1.
    pub fn product(factors: Vec<Mat2>) -> Self {
        let n = factors.len();
        Self { num_qubits: n, tables: factors.into_iter().map(|f| vec![f]).collect(), entries: vec![(vec![0; n], 1.0)] }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn entries(&self) -> &[(Vec<u8>, f64)] {
        &self.entries
    }

    pub fn factor(&self, q: usize, index: u8) -> &Mat2 {
        &self.tables[q][index as usize]
    }

    pub fn inputs(&self, indices: &[u8]) -> Vec<Mat2> {
        indices.iter().enumerate().map(|(q, &i)| self.tables[q][i as usize]).collect()
    }
}

fn check_duals(n: usize, duals: &[DualFrame]) -> Result<()> {
    if duals.len() != n {
        return Err(Error::Dimension(format!("{} dual frames for {n} qubits", duals.len())));
    }
    Ok(())
}

fn dual_tables(duals: &[DualFrame]) -> Vec<Vec<Mat2>> {
    duals.iter().map(|d| d.duals().to_vec()).collect()
}

/// Evaluates `Σ_k c_k Tr[Λ(⊗ inputs) P_k]` for a fixed circuit and observable.
#[derive(Debug, Clone)]
pub struct WeightEvaluator {
    evaluator: ConeEvaluator,
    terms: Vec<(C64, Vec<Mat2>)>,
    hermitian: bool,
}

impl WeightEvaluator {
    pub fn new(circuit: &MapCircuit, obs: &Observable) -> Result<Self> {
        if obs.num_qubits() != circuit.num_qubits() {
            return Err(Error::Dimension(format!(
                "{}-qubit observable for a {}-qubit circuit",
                obs.num_qubits(),
                circuit.num_qubits()
            )));
        }
        Ok(Self {
            evaluator: ConeEvaluator::new(circuit, None)?,
            terms: obs.terms().iter().map(|(c, p)| (*c, p.factors())).collect(),
            hermitian: obs.is_hermitian(),
        })
    }

    pub fn complex_weight(&self, inputs: &[Mat2]) -> C64 {
        self.terms.iter().map(|(c, probes)| c * self.evaluator.evaluate(inputs, probes)).sum()
    }

    /// Real weight, rejecting imaginary residues above `1e-8 (1 + |ω|)`.
    pub fn weight(&self, inputs: &[Mat2]) -> Result<f64> {
        if !self.hermitian {
            return Err(Error::NotHermitian("real shot weights need a Hermitian observable".into()));
        }
        let w = self.complex_weight(inputs);
        if w.im.abs() > IMAG_RESIDUE_TOL * (1.0 + w.re.abs()) {
            return Err(Error::NotHermitian(format!(
                "shot weight has imaginary residue {:.3e}; is the circuit Hermiticity preserving?",
                w.im
            )));
        }
        Ok(w.re)
    }

    /// `Σ_e w_e ω_e` over an ensemble, reduced in entry order.
    pub fn ensemble_value(&self, data: &InputEnsemble) -> Result<f64> {
        let weights = data
            .entries()
            .par_iter()
            .map(|(idx, _)| self.weight(&data.inputs(idx)))
            .collect::<Result<Vec<f64>>>()?;
        Ok(weights.iter().zip(data.entries()).map(|(w, (_, p))| w * p).sum())
    }
}

/// `ω_m` for a single outcome string.
pub fn shot_weight(outcome: &[u8], duals: &[DualFrame], circuit: &MapCircuit, obs: &Observable) -> Result<f64> {
    check_duals(circuit.num_qubits(), duals)?;
    if outcome.len() != duals.len() || outcome.iter().any(|&m| m > 3) {
        return Err(Error::Invalid(format!("bad outcome string {outcome:?}")));
    }
    let inputs: Vec<Mat2> = outcome.iter().zip(duals).map(|(&m, d)| *d.dual(m as usize)).collect();
    WeightEvaluator::new(circuit, obs)?.weight(&inputs)
}

/// Identifiers attached to an estimate.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimateLabels {
    pub observable: String,
    pub circuit: String,
    pub batch: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
    #[serde(rename = "S")]
    pub shots: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_shot: Option<Vec<f64>>,
    #[serde(flatten)]
    pub labels: EstimateLabels,
}

impl Estimate {
    /// Mean and `sqrt(V̄/S)` with `V̄ = [Σω²/S − mean²] S/(S−1)`.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let counts: Vec<(f64, usize)> = weights.iter().map(|&w| (w, 1)).collect();
        let mut est = Self::from_counts(&counts)?;
        est.per_shot = Some(weights.to_vec());
        Ok(est)
    }

    fn from_counts(weights: &[(f64, usize)]) -> Result<Self> {
        let shots: usize = weights.iter().map(|(_, c)| c).sum();
        if shots < 2 {
            return Err(Error::Invalid(format!("variance needs at least 2 shots, got {shots}")));
        }
        let s = shots as f64;
        let mean = weights.iter().map(|(w, c)| w * *c as f64).sum::<f64>() / s;
        // two-pass form of [Σω²/S − mean²]·S/(S−1), free of cancellation
        let var = weights.iter().map(|(w, c)| (w - mean).powi(2) * *c as f64).sum::<f64>() / (s - 1.0);
        Ok(Self { value: mean, sigma: (var / s).sqrt(), shots, per_shot: None, labels: EstimateLabels::default() })
    }

    pub fn with_labels(mut self, observable: &str, circuit: &str, batch: &str) -> Self {
        self.labels = EstimateLabels { observable: observable.into(), circuit: circuit.into(), batch: batch.into() };
        self
    }

    /// `{"observable", "circuit", "batch", "value", "sigma", "S"}`.
    pub fn to_json(&self) -> String {
        let mut report = self.clone();
        report.per_shot = None;
        serde_json::to_string(&report).expect("estimate serialises")
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EstimateOptions {
    /// Keep the weight of every shot, in batch order.
    pub keep_per_shot: bool,
}

/// Estimate `Tr[Λ(ρ) O]` from one batch.
pub fn estimate(
    batch: &OutcomeBatch,
    duals: &[DualFrame],
    circuit: &MapCircuit,
    obs: &Observable,
    opts: EstimateOptions,
) -> Result<Estimate> {
    let evaluator = WeightEvaluator::new(circuit, obs)?;
    estimate_with(&evaluator, batch, duals, opts)
}

pub fn estimate_with(
    evaluator: &WeightEvaluator,
    batch: &OutcomeBatch,
    duals: &[DualFrame],
    opts: EstimateOptions,
) -> Result<Estimate> {
    if batch.shots() < 2 {
        return Err(Error::Invalid(format!("variance needs at least 2 shots, got {}", batch.shots())));
    }
    let data = InputEnsemble::from_batch(batch, duals)?;
    let weights = data
        .entries()
        .par_iter()
        .map(|(idx, _)| evaluator.weight(&data.inputs(idx)))
        .collect::<Result<Vec<f64>>>()?;
    let counts: Vec<(f64, usize)> = weights
        .iter()
        .zip(data.entries())
        .map(|(w, (_, p))| (*w, (p * batch.shots() as f64).round() as usize))
        .collect();
    let mut est = Estimate::from_counts(&counts)?;
    if opts.keep_per_shot {
        let lookup: BTreeMap<&[u8], f64> =
            data.entries().iter().zip(&weights).map(|((idx, _), w)| (idx.as_slice(), *w)).collect();
        est.per_shot = Some(batch.outcomes().iter().map(|row| lookup[row.as_slice()]).collect());
    }
    est.labels.batch = batch.id();
    Ok(est)
}

/// One batch, many `(circuit, observable)` queries.
pub fn estimate_many(
    batch: &OutcomeBatch,
    duals: &[DualFrame],
    queries: &[(&MapCircuit, &Observable)],
    opts: EstimateOptions,
) -> Result<Vec<Estimate>> {
    queries.iter().map(|(c, o)| estimate(batch, duals, c, o, opts)).collect()
}

/// `Σ_m p_m ω_m` over the exact outcome distribution of `rho`.
pub fn estimate_exact(
    rho: &DensityMatrix,
    povms: &[SingleQubitPovm],
    duals: &[DualFrame],
    circuit: &MapCircuit,
    obs: &Observable,
) -> Result<f64> {
    if rho.num_qubits() > ENUMERATION_MAX_QUBITS {
        return Err(Error::Invalid(format!("exact estimation limited to N <= {ENUMERATION_MAX_QUBITS}")));
    }
    check_duals(rho.num_qubits(), duals)?;
    let probs = outcome_distribution(rho, povms)?;
    let data = InputEnsemble::from_distribution(&probs, duals)?;
    WeightEvaluator::new(circuit, obs)?.ensemble_value(&data)
}

/// Covariance of two estimates from the same shots: unbiased sample
/// covariance of the per-shot weights divided by `S`.
pub fn estimate_covariance(a: &Estimate, b: &Estimate) -> Result<f64> {
    let (wa, wb) = match (&a.per_shot, &b.per_shot) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::Invalid("covariance needs per-shot weights on both estimates".into())),
    };
    if wa.len() != wb.len() || a.labels.batch != b.labels.batch {
        return Err(Error::Invalid("covariance needs estimates from the same batch".into()));
    }
    let s = wa.len();
    if s < 2 {
        return Err(Error::Invalid("covariance needs at least 2 shots".into()));
    }
    let ma = wa.iter().sum::<f64>() / s as f64;
    let mb = wb.iter().sum::<f64>() / s as f64;
    let cov = wa.iter().zip(wb).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (s as f64 - 1.0);
    Ok(cov / s as f64)
}

/// Complex weights for non-Hermitian observables, no residue check.
pub fn complex_shot_weight(outcome: &[u8], duals: &[DualFrame], circuit: &MapCircuit, obs: &Observable) -> Result<C64> {
    check_duals(circuit.num_qubits(), duals)?;
    let inputs: Vec<Mat2> = outcome.iter().zip(duals).map(|(&m, d)| *d.dual(m as usize)).collect();
    let ev = WeightEvaluator::new(circuit, obs)?;
    Ok(ev.terms.iter().fold(ZERO, |acc, (c, probes)| acc + c * ev.evaluator.evaluate(&inputs, probes)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densesim::{apply_circuit, sample_outcomes};
    use crate::linalg::random_density;
    use crate::maps::LocalMap;
    use crate::pauli::expectation_oracle;
    use crate::povm::compute_duals;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sic(n: usize) -> (Vec<SingleQubitPovm>, Vec<DualFrame>) {
        let p = SingleQubitPovm::sic();
        let d = compute_duals(&p).unwrap();
        (vec![p; n], vec![d; n])
    }

    fn random_circuit(n: usize, seed: u64) -> MapCircuit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = MapCircuit::slot_count(crate::cone::Topology::Brickwork, n, 2);
        MapCircuit::brickwork(n, 2, Some((0..count).map(|_| LocalMap::random_cptp(2, &mut rng)).collect())).unwrap()
    }

    #[test]
    fn identity_observable_gives_unit_weight() {
        let (_, duals) = sic(3);
        let c = random_circuit(3, 1);
        let id = Observable::identity(3);
        for m in [[0u8, 1, 2], [3, 3, 0]] {
            assert!((shot_weight(&m, &duals, &c, &id).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn z_weight_on_outcome_zero_is_three() {
        let (_, duals) = sic(1);
        let c = MapCircuit::new(1, crate::cone::Topology::General, vec![]).unwrap();
        let z = Observable::from_real_terms(1, &[(1.0, "Z")]).unwrap();
        assert!((shot_weight(&[0], &duals, &c, &z).unwrap() - 3.0).abs() < 1e-12);
        assert!((shot_weight(&[1], &duals, &c, &z).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_shot_arithmetic() {
        let est = Estimate::from_weights(&[0.0, 2.0]).unwrap();
        assert_eq!(est.value, 1.0);
        assert!((est.sigma - 1.0).abs() < 1e-15);
        assert!(Estimate::from_weights(&[1.0]).is_err());
        let flat = Estimate::from_weights(&[1.0; 10]).unwrap();
        assert_eq!((flat.value, flat.sigma), (1.0, 0.0));
    }

    #[test]
    fn exact_path_matches_dense_value() {
        let (povms, duals) = sic(4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = DensityMatrix::new(random_density(&mut rng, 16)).unwrap();
        let c = random_circuit(4, 4);
        let obs = Observable::from_real_terms(4, &[(0.7, "XZIY"), (-0.2, "ZZZZ"), (0.4, "IIXI")]).unwrap();
        let exact = estimate_exact(&rho, &povms, &duals, &c, &obs).unwrap();
        let dense = expectation_oracle(&apply_circuit(&rho, &c).unwrap(), &obs).unwrap().re;
        assert!((exact - dense).abs() < 1e-10);
    }

    #[test]
    fn per_shot_weights_and_linearity() {
        let (povms, duals) = sic(3);
        let rho = DensityMatrix::zero_state(3);
        let batch = sample_outcomes(&rho, &povms, 300, 5).unwrap();
        let c = random_circuit(3, 6);
        let o1 = Observable::from_real_terms(3, &[(1.0, "XZI")]).unwrap();
        let o2 = Observable::from_real_terms(3, &[(1.0, "IZY")]).unwrap();
        let both = Observable::from_real_terms(3, &[(2.0, "XZI"), (-3.0, "IZY")]).unwrap();
        let opts = EstimateOptions { keep_per_shot: true };
        let e1 = estimate(&batch, &duals, &c, &o1, opts).unwrap();
        let e2 = estimate(&batch, &duals, &c, &o2, opts).unwrap();
        let e12 = estimate(&batch, &duals, &c, &both, opts).unwrap();
        let (w1, w2, w12) = (e1.per_shot.unwrap(), e2.per_shot.clone().unwrap(), e12.per_shot.unwrap());
        for i in 0..w1.len() {
            assert!((w12[i] - (2.0 * w1[i] - 3.0 * w2[i])).abs() < 1e-12);
        }
        let recomputed = Estimate::from_weights(&w2).unwrap();
        assert!((recomputed.value - e2.value).abs() < 1e-12);
        assert!((recomputed.sigma - e2.sigma).abs() < 1e-12);
        assert!((estimate_covariance(&e2, &e2).unwrap() - e2.sigma * e2.sigma).abs() < 1e-12);
        let neg = estimate(&batch, &duals, &c, &o2.scaled(C64::new(-1.0, 0.0)), opts).unwrap();
        assert!((estimate_covariance(&e2, &neg).unwrap() + e2.sigma * e2.sigma).abs() < 1e-12);
    }

    #[test]
    fn report_json_fields() {
        let est = Estimate::from_weights(&[0.0, 2.0]).unwrap().with_labels("H", "identity", "b1");
        let v: serde_json::Value = serde_json::from_str(&est.to_json()).unwrap();
        for key in ["observable", "circuit", "batch", "value", "sigma", "S"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v.get("per_shot").is_none());
    }
}
