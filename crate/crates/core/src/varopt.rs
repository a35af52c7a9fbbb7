//! Coordinate-descent optimisation of map circuits over CPTP components.
//!
//! With every component but one fixed, the estimated energy is linear in the
//! remaining component's Choi matrix `C`: `E = Re Tr[C M]`. Each sweep step
//! assembles `M`, minimises over the CPTP set and installs the minimiser when
//! it lowers the energy.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{Component, MapCircuit, SplitPlan};
use crate::densesim::DensityMatrix;
use crate::error::{Error, Result};
use crate::estimation::{InputEnsemble, WeightEvaluator};
use crate::linalg::{
    apply_superop_embedded, c, frobenius, hermitian_part, identity, inv_sqrt_psd, kron, min_eig,
    partial_trace_second, permute_qubits, psd_project, CMat, Mat2, C64, ONE, ZERO,
};
use crate::maps::{compose, ChoiMatrix, LocalMap};
use crate::pauli::Observable;

/// Training input for a sweep.
#[derive(Debug, Clone)]
pub enum TrainingData {
    /// Sampled or enumerated dual-operator inputs, contracted by the cone engine.
    Ensemble(InputEnsemble),
    /// An exact input state, contracted densely.
    State(DensityMatrix),
}

impl TrainingData {
    fn num_qubits(&self) -> usize {
        match self {
            TrainingData::Ensemble(e) => e.num_qubits(),
            TrainingData::State(r) => r.num_qubits(),
        }
    }
}

/// `E(C) = Re Tr[C M] + offset` for the Choi matrix `C` of one component.
#[derive(Debug, Clone)]
pub struct LocalObjective {
    pub component: usize,
    pub arity: usize,
    pub matrix: CMat,
    pub offset: f64,
}

impl LocalObjective {
    pub fn value(&self, choi: &ChoiMatrix) -> f64 {
        (&choi.matrix * &self.matrix).trace().re + self.offset
    }
}

/// Energy `Tr[O Λ(input)]` of the circuit on the training data.
pub fn energy(circuit: &MapCircuit, data: &TrainingData, obs: &Observable) -> Result<f64> {
    check_sizes(circuit, data, obs)?;
    match data {
        TrainingData::Ensemble(e) => WeightEvaluator::new(circuit, obs)?.ensemble_value(e),
        TrainingData::State(rho) => {
            let out = dense_forward(rho.matrix(), circuit, circuit.components().len());
            Ok((&out * obs.to_dense()).trace().re)
        }
    }
}

fn check_sizes(circuit: &MapCircuit, data: &TrainingData, obs: &Observable) -> Result<()> {
    let n = circuit.num_qubits();
    if data.num_qubits() != n || obs.num_qubits() != n {
        return Err(Error::Dimension("circuit, data and observable sizes differ".into()));
    }
    Ok(())
}

fn dense_forward(rho: &CMat, circuit: &MapCircuit, upto: usize) -> CMat {
    let n = circuit.num_qubits();
    circuit.components()[..upto]
        .iter()
        .fold(rho.clone(), |acc, comp| apply_superop_embedded(&acc, n, &comp.qubits, comp.map.superop()))
}

/// Build `M` for component `s`.
pub fn assemble_local_objective(
    circuit: &MapCircuit,
    s: usize,
    data: &TrainingData,
    obs: &Observable,
) -> Result<LocalObjective> {
    check_sizes(circuit, data, obs)?;
    if !obs.is_hermitian() {
        return Err(Error::NotHermitian("local objective needs a Hermitian observable".into()));
    }
    let comp = circuit
        .components()
        .get(s)
        .ok_or_else(|| Error::Invalid(format!("component index {s} out of range")))?;
    let matrix = match data {
        TrainingData::Ensemble(e) => ensemble_objective(circuit, s, e, obs)?,
        TrainingData::State(rho) => dense_objective(circuit, s, rho, obs),
    };
    Ok(LocalObjective { component: s, arity: comp.qubits.len(), matrix, offset: 0.0 })
}

/// Residual cache key: input indices then probe letters on the relevant qubits.
fn key(indices: &[u8], input_qubits: &[usize], letters: &[u8], probe_qubits: &[usize]) -> Vec<u8> {
    input_qubits.iter().map(|&q| indices[q]).chain(probe_qubits.iter().map(|&q| letters[q])).collect()
}

fn ensemble_objective(circuit: &MapCircuit, s: usize, data: &InputEnsemble, obs: &Observable) -> Result<CMat> {
    let plan = SplitPlan::new(circuit, s, None)?;
    let f_in = plan.forward_input_qubits();
    let f_pr = plan.forward_probe_qubits().to_vec();
    let b_in = plan.backward_input_qubits().to_vec();
    let b_pr = plan.backward_probe_qubits();
    let letters: Vec<Vec<u8>> = obs
        .terms()
        .iter()
        .map(|(_, p)| p.letters().iter().map(|l| *l as u8).collect())
        .collect();
    let probes: Vec<Vec<Mat2>> = obs.terms().iter().map(|(_, p)| p.factors()).collect();

    // Accumulate weights per (forward key, backward key) pair in a fixed order.
    let mut f_keys: HashMap<Vec<u8>, (usize, usize)> = HashMap::new();
    let mut b_keys: HashMap<Vec<u8>, (usize, usize)> = HashMap::new();
    let mut pair_weights: HashMap<(usize, usize), C64> = HashMap::new();
    let mut pair_order: Vec<(usize, usize)> = Vec::new();
    for (e, (indices, w)) in data.entries().iter().enumerate() {
        for (k, (coeff, _)) in obs.terms().iter().enumerate() {
            let fk = key(indices, &f_in, &letters[k], &f_pr);
            let next_f = f_keys.len();
            let fi = f_keys.entry(fk).or_insert((next_f, e * obs.terms().len() + k)).0;
            let bk = key(indices, &b_in, &letters[k], &b_pr);
            let next_b = b_keys.len();
            let bi = b_keys.entry(bk).or_insert((next_b, e * obs.terms().len() + k)).0;
            let slot = pair_weights.entry((fi, bi)).or_insert_with(|| {
                pair_order.push((fi, bi));
                ZERO
            });
            *slot += coeff * c(*w, 0.0);
        }
    }
    let terms = obs.terms().len();
    let representative = |keys: &HashMap<Vec<u8>, (usize, usize)>| {
        let mut v: Vec<(usize, usize)> = keys.values().copied().collect();
        v.sort_unstable();
        v.into_iter().map(|(_, rep)| (rep / terms, rep % terms)).collect::<Vec<_>>()
    };
    let f_reps = representative(&f_keys);
    let b_reps = representative(&b_keys);
    let forward: Vec<CMat> = f_reps
        .par_iter()
        .map(|&(e, k)| plan.forward_residual(&data.inputs(&data.entries()[e].0), &probes[k]))
        .collect();
    let backward: Vec<CMat> = b_reps
        .par_iter()
        .map(|&(e, k)| plan.backward_residual(&data.inputs(&data.entries()[e].0), &probes[k]))
        .collect();

    let dim = 1usize << (2 * plan.singled().len());
    let chunks: Vec<CMat> = pair_order
        .par_chunks(64)
        .map(|chunk| {
            let mut acc = CMat::zeros(dim, dim);
            for pair in chunk {
                let w = pair_weights[pair];
                for (r, rb) in plan.decompose(&forward[pair.0], &backward[pair.1]) {
                    acc += kron(&r.transpose(), &rb) * w;
                }
            }
            acc
        })
        .collect();
    let total = chunks.into_iter().fold(CMat::zeros(dim, dim), |a, b| a + b);
    Ok(hermitian_part(&total))
}

/// `M = herm(Kᵀ)`, `K[(a,i),(b,j)] = Tr[X_ab Y_ji]` with `X = Λ_F(ρ)` and
/// `Y = Λ_Bᵀ(O)` blocked on the component's qubits.
fn dense_objective(circuit: &MapCircuit, s: usize, rho: &DensityMatrix, obs: &Observable) -> CMat {
    let n = circuit.num_qubits();
    let comps = circuit.components();
    let x = dense_forward(rho.matrix(), circuit, s);
    let y = comps[s + 1..]
        .iter()
        .rev()
        .fold(obs.to_dense(), |acc, comp| apply_superop_embedded(&acc, n, &comp.qubits, comp.map.dual().superop()));
    let target = &comps[s].qubits;
    let order: Vec<usize> = target.iter().copied().chain((0..n).filter(|q| !target.contains(q))).collect();
    let x = permute_qubits(&x, n, &order);
    let y = permute_qubits(&y, n, &order);
    let d = 1usize << target.len();
    let r = 1usize << (n - target.len());
    let k = CMat::from_fn(d * d, d * d, |row, col| {
        let (a, i) = (row / d, row % d);
        let (b, j) = (col / d, col % d);
        let mut acc = ZERO;
        for u in 0..r {
            for v in 0..r {
                acc += x[(a * r + u, b * r + v)] * y[(j * r + v, i * r + u)];
            }
        }
        acc
    });
    hermitian_part(&k.transpose())
}

/// Options for [`minimize_over_cptp`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdpOptions {
    pub max_iters: usize,
    /// Initial penalty parameter in units of `‖M‖_F` (adapted during the run).
    pub step0: f64,
    /// Target duality gap relative to `‖M‖_F`.
    pub tol: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { max_iters: 5000, step0: 1.0, tol: 1e-9 }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub choi: ChoiMatrix,
    pub value: f64,
    /// Certified lower bound on the optimum.
    pub lower_bound: f64,
    pub iterations: usize,
    pub tp_residual: f64,
    pub min_eigenvalue: f64,
    pub converged: bool,
}

impl SdpSolution {
    pub fn gap(&self) -> f64 {
        self.value - self.lower_bound
    }
}

fn affine_tp_project(x: &CMat, d: usize) -> CMat {
    let delta = identity(d) - partial_trace_second(x, d, d);
    x + kron(&delta, &identity(d)) / c(d as f64, 0.0)
}

/// Rescale a PSD matrix to be exactly trace preserving by the congruence
/// `(T^{-1/2} ⊗ I) Z (T^{-1/2} ⊗ I)` with `T = Tr_out Z`.
fn polish(z: &CMat, d: usize) -> CMat {
    let mut z = hermitian_part(z);
    let t = partial_trace_second(&z, d, d);
    if min_eig(&t) < 1e-10 {
        z += identity(d * d) * c(1e-10, 0.0);
    }
    let t = partial_trace_second(&z, d, d);
    let a = kron(&inv_sqrt_psd(&t), &identity(d));
    hermitian_part(&(&a * z * &a))
}

/// `Tr Y + d · λ_min(M − Y ⊗ I)` is a lower bound for every Hermitian `Y`.
fn lower_bound(m: &CMat, y: &CMat, d: usize) -> f64 {
    y.trace().re + d as f64 * min_eig(&(m - kron(y, &identity(d))))
}

/// Minimise `Re Tr[C M]` over Choi matrices of CPTP maps by ADMM
/// (alternating affine TP projection and PSD eigenvalue clipping) with a
/// dual certificate for the gap.
pub fn minimize_over_cptp(obj: &LocalObjective, opts: &SdpOptions, warm: Option<&ChoiMatrix>) -> Result<SdpSolution> {
    let d = 1usize << obj.arity;
    if obj.matrix.shape() != (d * d, d * d) {
        return Err(Error::Dimension("objective matrix does not match arity".into()));
    }
    let herm_err = frobenius(&(&obj.matrix - obj.matrix.adjoint()));
    let scale = frobenius(&obj.matrix);
    if herm_err > 1e-10 * scale.max(1.0) {
        return Err(Error::NotHermitian("objective matrix".into()));
    }
    let start = match warm {
        Some(w) if w.matrix.shape() == (d * d, d * d) => polish(&psd_project(&w.matrix), d),
        _ => identity(d * d) / c(d as f64, 0.0),
    };
    let finish = |choi: CMat, lb: f64, iterations: usize, converged: bool| {
        let choi = ChoiMatrix { arity: obj.arity, matrix: choi };
        let value = obj.value(&choi);
        SdpSolution {
            tp_residual: choi.tp_residual(),
            min_eigenvalue: choi.min_eigenvalue(),
            value,
            lower_bound: lb.min(value),
            iterations,
            choi,
            converged,
        }
    };
    if scale == 0.0 {
        return Ok(finish(start, obj.offset, 0, true));
    }
    let m = hermitian_part(&obj.matrix) / c(scale, 0.0);
    let mut rho = opts.step0.max(1e-6);
    let mut z = start;
    let mut u = CMat::zeros(d * d, d * d);
    let mut best = polish(&z, d);
    let mut best_val = (&best * &m).trace().re;
    let mut best_lb = f64::NEG_INFINITY;
    for it in 1..=opts.max_iters {
        let x = affine_tp_project(&(&z - &u - &m / c(rho, 0.0)), d);
        let z_old = z;
        z = psd_project(&(&x + &u));
        u += &x - &z;
        let primal = frobenius(&(&x - &z));
        let dual = rho * frobenius(&(&z - &z_old));
        if it % 20 == 0 {
            let candidate = polish(&z, d);
            let val = (&candidate * &m).trace().re;
            if val < best_val {
                best_val = val;
                best = candidate;
            }
            let y = hermitian_part(&partial_trace_second(&(&m + &u * c(rho, 0.0)), d, d)) / c(d as f64, 0.0);
            best_lb = best_lb.max(lower_bound(&m, &y, d));
            if best_val - best_lb <= opts.tol {
                return Ok(finish(best, best_lb * scale + obj.offset, it, true));
            }
            // residual balancing; the scaled dual variable follows the penalty
            if primal > 10.0 * dual {
                rho *= 2.0;
                u /= c(2.0, 0.0);
            } else if dual > 10.0 * primal {
                rho /= 2.0;
                u *= c(2.0, 0.0);
            }
        }
    }
    let converged = best_val - best_lb <= opts.tol;
    Ok(finish(best, best_lb * scale + obj.offset, opts.max_iters, converged))
}

/// Options for [`sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    pub rounds: usize,
    /// Component visiting order; layer-major list order when `None`.
    pub order: Option<Vec<usize>>,
    pub sdp: SdpOptions,
    /// Minimum decrease for installing a new component.
    pub accept_tol: f64,
    /// Stop once a full round lowers the energy by less than this.
    pub round_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { rounds: 20, order: None, sdp: SdpOptions::default(), accept_tol: 1e-8, round_tol: 1e-9 }
    }
}

impl SweepOptions {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepStep {
    pub round: usize,
    pub component: usize,
    pub before: f64,
    pub after: f64,
    pub installed: bool,
    pub sdp_iterations: usize,
    pub sdp_gap: f64,
    pub tp_residual: f64,
    pub min_eigenvalue: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepReport {
    pub steps: Vec<SweepStep>,
    /// Energy before the first step, then after every step.
    pub energies: Vec<f64>,
}

impl SweepReport {
    pub fn initial_energy(&self) -> f64 {
        self.energies[0]
    }

    pub fn final_energy(&self) -> f64 {
        *self.energies.last().expect("report has an initial energy")
    }

    pub fn installed(&self) -> usize {
        self.steps.iter().filter(|s| s.installed).count()
    }

    /// Largest increase between consecutive energies (≤ 0 when monotone).
    pub fn max_increase(&self) -> f64 {
        self.energies.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `iteration,component,energy,relative_error` with the error column
    /// empty when no reference energy is given.
    pub fn to_csv(&self, reference: Option<f64>) -> String {
        let mut out = String::from("iteration,component,energy,relative_error\n");
        let rel = |e: f64| reference.map(|r| format!("{:.12e}", ((e - r) / r).abs())).unwrap_or_default();
        writeln!(out, "0,,{:.12},{}", self.energies[0], rel(self.energies[0])).unwrap();
        for (i, (step, e)) in self.steps.iter().zip(&self.energies[1..]).enumerate() {
            writeln!(out, "{},{},{:.12},{}", i + 1, step.component, e, rel(*e)).unwrap();
        }
        out
    }
}

/// Coordinate descent over the circuit's components.
pub fn sweep(
    circuit: &MapCircuit,
    data: &TrainingData,
    obs: &Observable,
    opts: &SweepOptions,
) -> Result<(SweepReport, MapCircuit)> {
    let mut circuit = circuit.clone();
    let order = match &opts.order {
        Some(o) => {
            if let Some(bad) = o.iter().find(|&&s| s >= circuit.components().len()) {
                return Err(Error::Invalid(format!("sweep order names component {bad}")));
            }
            o.clone()
        }
        None => (0..circuit.components().len()).collect(),
    };
    let mut report = SweepReport { steps: Vec::new(), energies: vec![energy(&circuit, data, obs)?] };
    for round in 0..opts.rounds {
        let round_start = report.final_energy();
        for &s in &order {
            let obj = assemble_local_objective(&circuit, s, data, obs)?;
            let current = circuit.components()[s].map.choi();
            let before = obj.value(&current);
            let sol = minimize_over_cptp(&obj, &opts.sdp, Some(&current))?;
            let installed = sol.value < before - opts.accept_tol;
            if installed {
                circuit.replace_map(s, LocalMap::from_choi(&sol.choi))?;
            }
            let after = if installed { sol.value } else { before };
            report.steps.push(SweepStep {
                round,
                component: s,
                before,
                after,
                installed,
                sdp_iterations: sol.iterations,
                sdp_gap: sol.gap(),
                tp_residual: sol.tp_residual,
                min_eigenvalue: sol.min_eigenvalue,
                converged: sol.converged,
            });
            report.energies.push(after);
        }
        if round_start - report.final_energy() < opts.round_tol {
            break;
        }
    }
    Ok((report, circuit))
}

/// Initial maps for [`classical_ansatz`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnsatzInit {
    Identity,
    RandomUnitary(u64),
}

/// Replace every component by the identity or an independent Haar-random
/// unitary conjugation.
pub fn initialize(circuit: &MapCircuit, init: AnsatzInit) -> Result<MapCircuit> {
    let mut out = circuit.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(match init {
        AnsatzInit::RandomUnitary(seed) => seed,
        AnsatzInit::Identity => 0,
    });
    for (i, comp) in circuit.components().iter().enumerate() {
        let k = comp.qubits.len();
        let map = match init {
            AnsatzInit::Identity => LocalMap::identity(k),
            AnsatzInit::RandomUnitary(_) => LocalMap::random_unitary(k, &mut rng),
        };
        out.replace_map(i, map)?;
    }
    Ok(out)
}

/// Optimise a staircase circuit acting on `|0…0⟩`.
pub fn classical_ansatz(
    n: usize,
    obs: &Observable,
    layers: usize,
    init: AnsatzInit,
    opts: &SweepOptions,
) -> Result<(SweepReport, MapCircuit)> {
    let circuit = initialize(&MapCircuit::staircase(n, layers, None)?, init)?;
    let zero = Mat2::new(ONE, ZERO, ZERO, ZERO);
    let data = TrainingData::Ensemble(InputEnsemble::product(vec![zero; n]));
    sweep(&circuit, &data, obs, opts)
}

/// Precede the first map on every qubit by the reset `Z(σ) = |0⟩⟨0| Tr σ`
/// on that qubit, making the circuit's output independent of its input.
pub fn zreset_compose(circuit: &MapCircuit) -> Result<MapCircuit> {
    let n = circuit.num_qubits();
    let mut reset = vec![false; n];
    let mut components = Vec::with_capacity(circuit.components().len());
    for comp in circuit.components() {
        let pre = comp.qubits.iter().try_fold(None::<LocalMap>, |acc, &q| {
            let factor = if reset[q] { LocalMap::identity(1) } else { LocalMap::zreset() };
            reset[q] = true;
            match acc {
                None => Ok::<_, Error>(Some(factor)),
                Some(a) => Ok(Some(a.tensor(&factor)?)),
            }
        })?;
        let map = match pre {
            Some(p) => compose(&[p, comp.map.clone()])?,
            None => comp.map.clone(),
        };
        components.push(Component { layer: comp.layer, qubits: comp.qubits.clone(), map });
    }
    if let Some(q) = reset.iter().position(|r| !r) {
        return Err(Error::Invalid(format!("qubit {q} is not touched by any component")));
    }
    Ok(MapCircuit::new(n, circuit.topology(), components)?.with_max_active(Some(circuit.max_active())))
}
