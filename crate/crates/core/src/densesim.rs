//! Dense density-matrix simulation: state preparation, channel application,
//! IC-POVM outcome sampling and brute-force references for the cone engine.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::cone::MapCircuit;
use crate::error::{Error, Result};
use crate::linalg::{
    apply_superop_embedded, c, eigh, identity, is_hermitian, kron, min_eig, trace_out_with, CMat, C64, ONE, ZERO,
};
use crate::maps::{check_positions, compose, rx, rz, LocalMap, MapPayload};
use crate::pauli::{Observable, Pauli};
use crate::povm::SingleQubitPovm;

/// Largest register for which the full `4^N` outcome distribution is enumerated.
pub const ENUMERATION_MAX_QUBITS: usize = 9;
/// Largest register accepted by [`dense_map_circuit_oracle`].
pub const ORACLE_MAX_QUBITS: usize = 6;
/// Largest register accepted by dense diagonalisation and dense states.
pub const DENSE_MAX_QUBITS: usize = 12;

/// `N`-qubit density operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    num_qubits: usize,
    matrix: CMat,
}

impl DensityMatrix {
    /// Checks Hermiticity and unit trace to 1e-10. Positivity is advisory, see
    /// [`is_valid`](Self::is_valid), since images under virtual maps need not be
    /// positive.
    pub fn new(matrix: CMat) -> Result<Self> {
        let d = matrix.nrows();
        if !matrix.is_square() || !d.is_power_of_two() || d < 2 {
            return Err(Error::Dimension(format!("density matrix must be 2^N square, got {}x{}", d, matrix.ncols())));
        }
        let num_qubits = d.trailing_zeros() as usize;
        if num_qubits > DENSE_MAX_QUBITS {
            return Err(Error::Invalid(format!("dense states limited to N <= {DENSE_MAX_QUBITS}")));
        }
        if !is_hermitian(&matrix, 1e-10) {
            return Err(Error::NotHermitian("density matrix".into()));
        }
        let tr = matrix.trace();
        if (tr - ONE).norm() > 1e-10 {
            return Err(Error::Invalid(format!("density matrix trace is {tr}, expected 1")));
        }
        Ok(Self { num_qubits, matrix })
    }

    pub fn zero_state(num_qubits: usize) -> Self {
        let d = 1usize << num_qubits;
        let mut matrix = CMat::zeros(d, d);
        matrix[(0, 0)] = ONE;
        Self { num_qubits, matrix }
    }

    pub fn maximally_mixed(num_qubits: usize) -> Self {
        let d = 1usize << num_qubits;
        Self { num_qubits, matrix: identity(d) / c(d as f64, 0.0) }
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalised) state vector.
    pub fn from_pure(psi: &DVector<C64>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::Invalid("zero state vector".into()));
        }
        let v = psi / c(norm, 0.0);
        Self::new(&v * v.adjoint())
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eig(&self.matrix)
    }

    /// Positive semidefinite to −1e-8.
    pub fn is_valid(&self) -> bool {
        self.min_eigenvalue() >= -1e-8
    }
}

/// Image of `rho` under `map` acting on `qubits`, identity elsewhere.
pub fn apply_local_map(rho: &DensityMatrix, map: &LocalMap, qubits: &[usize]) -> Result<DensityMatrix> {
    if qubits.len() != map.arity() {
        return Err(Error::Dimension(format!("map of arity {} applied to {} qubits", map.arity(), qubits.len())));
    }
    check_positions(rho.num_qubits, qubits)?;
    let out = apply_superop_embedded(&rho.matrix, rho.num_qubits, qubits, map.superop());
    DensityMatrix::new(out).map_err(|e| match e {
        Error::Invalid(msg) if !map.flags().tp => Error::Invalid(format!("map is not trace preserving: {msg}")),
        other => other,
    })
}

/// Apply every component of a circuit in order.
pub fn apply_circuit(rho: &DensityMatrix, circuit: &MapCircuit) -> Result<DensityMatrix> {
    if circuit.num_qubits() != rho.num_qubits {
        return Err(Error::Dimension("circuit and state sizes differ".into()));
    }
    circuit
        .components()
        .iter()
        .try_fold(rho.clone(), |acc, comp| apply_local_map(&acc, &comp.map, &comp.qubits))
}

/// One brickwork layer of `N_ij = (1 − p) Id + p E_ij` with independent
/// Ginibre-random CPTP maps `E_ij`: pairs `(0,1), (2,3), …` then `(1,2), (3,4), …`.
pub fn perturbation_circuit(num_qubits: usize, p: f64, seed: u64) -> Result<MapCircuit> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invalid(format!("mixing weight {p} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = MapCircuit::brickwork(num_qubits, 2, None)?.components().len();
    let maps = (0..count)
        .map(|_| {
            let e = LocalMap::random_cptp(2, &mut rng);
            LocalMap::identity(2).linear_combination(c(1.0 - p, 0.0), &e, c(p, 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    MapCircuit::brickwork(num_qubits, 2, Some(maps))
}

pub fn build_perturbed_state(rho0: &DensityMatrix, p: f64, seed: u64) -> Result<DensityMatrix> {
    apply_circuit(rho0, &perturbation_circuit(rho0.num_qubits, p, seed)?)
}

/// CNOT conjugation followed by two-qubit depolarising noise and then
/// `R_x(θ) R_z(θ)` on each of the two qubits.
pub fn noisy_cnot(theta: f64, p_dep: f64) -> Result<LocalMap> {
    let depol = LocalMap::depolarizing(2, p_dep)?;
    let single = rx(theta) * rz(theta);
    let rot = LocalMap::unitary(&kron(&single, &single))?;
    compose(&[LocalMap::cnot(), depol, rot])
}

/// Apply [`noisy_cnot`] twice on every bond `(i, i+1)`; ideally the identity,
/// so the output is a noisy copy of the input.
pub fn noisy_cnot_echo(rho: &DensityMatrix, theta: f64, p_dep: f64) -> Result<DensityMatrix> {
    let gate = noisy_cnot(theta, p_dep)?;
    let mut out = rho.clone();
    for i in 0..rho.num_qubits.saturating_sub(1) {
        out = apply_local_map(&out, &gate, &[i, i + 1])?;
        out = apply_local_map(&out, &gate, &[i, i + 1])?;
    }
    Ok(out)
}

/// Sampled IC-POVM outcomes, one row of per-qubit outcome indices per shot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeBatch {
    num_qubits: usize,
    outcomes: Vec<Vec<u8>>,
    povm_labels: Vec<String>,
    seed: u64,
    source: String,
}

impl OutcomeBatch {
    pub fn new(
        num_qubits: usize,
        outcomes: Vec<Vec<u8>>,
        povm_labels: Vec<String>,
        seed: u64,
        source: impl Into<String>,
    ) -> Result<Self> {
        if povm_labels.len() != num_qubits {
            return Err(Error::Dimension(format!("{} POVM labels for {num_qubits} qubits", povm_labels.len())));
        }
        for (i, row) in outcomes.iter().enumerate() {
            if row.len() != num_qubits {
                return Err(Error::Dimension(format!("shot {i} has {} entries, expected {num_qubits}", row.len())));
            }
            if let Some(bad) = row.iter().find(|&&m| m > 3) {
                return Err(Error::Invalid(format!("shot {i} has outcome {bad} outside 0..=3")));
            }
        }
        Ok(Self { num_qubits, outcomes, povm_labels, seed, source: source.into() })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn shots(&self) -> usize {
        self.outcomes.len()
    }

    pub fn outcomes(&self) -> &[Vec<u8>] {
        &self.outcomes
    }

    pub fn povm_labels(&self) -> &[String] {
        &self.povm_labels
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Identifier used in estimate labels.
    pub fn id(&self) -> String {
        format!("seed{}-S{}", self.seed, self.shots())
    }

    fn povm_header(&self) -> String {
        let first = &self.povm_labels[0];
        if self.povm_labels.iter().all(|l| l == first) {
            first.clone()
        } else {
            self.povm_labels.join(",")
        }
    }

    /// CSV with a `# povm=<label> seed=<int> N=<int> S=<int>` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# povm={} seed={} N={} S={}", self.povm_header(), self.seed, self.num_qubits, self.shots())
            .unwrap();
        if !self.source.is_empty() {
            writeln!(out, "# source={}", self.source.replace('\n', " ")).unwrap();
        }
        for row in &self.outcomes {
            let line: Vec<String> = row.iter().map(|m| m.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty batch file".into()))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("batch file must start with a '# povm=... seed=... N=... S=...' header".into()))?;
        let (mut povm, mut seed, mut n, mut s) = (None, None, None, None);
        for field in header.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line 1: malformed header field {field:?}")))?;
            let bad = || Error::Parse(format!("line 1: bad value {value:?} for {key}"));
            match key {
                "povm" => povm = Some(value.to_string()),
                "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad())?),
                "N" => n = Some(value.parse::<usize>().map_err(|_| bad())?),
                "S" => s = Some(value.parse::<usize>().map_err(|_| bad())?),
                _ => {}
            }
        }
        let missing = |k: &str| Error::Parse(format!("line 1: header missing {k}"));
        let povm = povm.ok_or_else(|| missing("povm"))?;
        let seed = seed.ok_or_else(|| missing("seed"))?;
        let n = n.ok_or_else(|| missing("N"))?;
        let s = s.ok_or_else(|| missing("S"))?;
        let labels: Vec<String> = if povm.contains(',') {
            povm.split(',').map(str::to_string).collect()
        } else {
            vec![povm; n]
        };
        let mut source = String::new();
        let mut outcomes = Vec::with_capacity(s);
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(src) = comment.trim().strip_prefix("source=") {
                    source = src.to_string();
                }
                continue;
            }
            let row = line
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<u8>()
                        .ok()
                        .filter(|&m| m <= 3)
                        .ok_or_else(|| Error::Parse(format!("line {}: bad outcome {tok:?}", idx + 1)))
                })
                .collect::<Result<Vec<u8>>>()?;
            if row.len() != n {
                return Err(Error::Parse(format!("line {}: expected {n} outcomes, found {}", idx + 1, row.len())));
            }
            outcomes.push(row);
        }
        if outcomes.len() != s {
            return Err(Error::Parse(format!("header declares S={s} but file has {} rows", outcomes.len())));
        }
        Self::new(n, outcomes, labels, seed, source)
    }
}

/// Exact outcome distribution `p_m = Tr[ρ Π_m]` over all `4^N` outcome strings,
/// indexed base-4 with qubit 0 most significant.
pub fn outcome_distribution(rho: &DensityMatrix, povms: &[SingleQubitPovm]) -> Result<Vec<f64>> {
    let n = rho.num_qubits;
    if povms.len() != n {
        return Err(Error::Dimension(format!("{} POVMs for {n} qubits", povms.len())));
    }
    if n > ENUMERATION_MAX_QUBITS {
        return Err(Error::Invalid(format!("outcome enumeration limited to N <= {ENUMERATION_MAX_QUBITS}")));
    }
    // Digit of qubit q is 2 r_q + c_q before its transform, m_q after.
    let size = 1usize << (2 * n);
    let mut v = vec![ZERO; size];
    for r in 0..(1usize << n) {
        for col in 0..(1usize << n) {
            let mut idx = 0usize;
            for q in 0..n {
                let rb = (r >> (n - 1 - q)) & 1;
                let cb = (col >> (n - 1 - q)) & 1;
                idx = idx * 4 + 2 * rb + cb;
            }
            v[idx] = rho.matrix[(r, col)];
        }
    }
    for (q, povm) in povms.iter().enumerate() {
        // Tr[ρ Π] = Σ_{r,c} ρ[r,c] Π[c,r]
        let a: [[C64; 4]; 4] =
            std::array::from_fn(|m| std::array::from_fn(|rc| povm.effects()[m][(rc & 1, rc >> 1)]));
        let stride = 1usize << (2 * (n - 1 - q));
        let mut next = vec![ZERO; size];
        for hi in 0..(size / (4 * stride)) {
            for lo in 0..stride {
                let base = hi * 4 * stride + lo;
                let x: [C64; 4] = std::array::from_fn(|t| v[base + t * stride]);
                for (m, row) in a.iter().enumerate() {
                    next[base + m * stride] = row.iter().zip(x.iter()).map(|(p, y)| p * y).sum();
                }
            }
        }
        v = next;
    }
    Ok(v.into_iter().map(|z| z.re).collect())
}

/// How [`sample_outcomes_with`] draws shots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingPath {
    /// Full distribution when `N <= ENUMERATION_MAX_QUBITS`, sequential otherwise.
    Auto,
    Enumerate,
    Sequential,
}

pub fn sample_outcomes(rho: &DensityMatrix, povms: &[SingleQubitPovm], shots: usize, seed: u64) -> Result<OutcomeBatch> {
    sample_outcomes_with(rho, povms, shots, seed, SamplingPath::Auto)
}

pub fn sample_outcomes_with(
    rho: &DensityMatrix,
    povms: &[SingleQubitPovm],
    shots: usize,
    seed: u64,
    path: SamplingPath,
) -> Result<OutcomeBatch> {
    let n = rho.num_qubits;
    if povms.len() != n {
        return Err(Error::Invalid(format!("{} POVMs supplied for {n} qubits", povms.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enumerate = match path {
        SamplingPath::Auto => n <= ENUMERATION_MAX_QUBITS,
        SamplingPath::Enumerate => true,
        SamplingPath::Sequential => false,
    };
    let outcomes = if enumerate {
        let probs = outcome_distribution(rho, povms)?;
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p.max(0.0);
            cdf.push(acc);
        }
        (0..shots)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * acc;
                let idx = cdf.partition_point(|&x| x <= u).min(cdf.len() - 1);
                (0..n).map(|q| ((idx >> (2 * (n - 1 - q))) & 3) as u8).collect()
            })
            .collect()
    } else {
        (0..shots).map(|_| sample_sequential(rho, povms, &mut rng)).collect()
    };
    let labels = povms.iter().map(|p| p.label().to_string()).collect();
    OutcomeBatch::new(n, outcomes, labels, seed, "densesim")
}

fn sample_sequential<R: Rng>(rho: &DensityMatrix, povms: &[SingleQubitPovm], rng: &mut R) -> Vec<u8> {
    let n = rho.num_qubits;
    let mut sigma = rho.matrix.clone();
    let mut row = Vec::with_capacity(n);
    for (q, povm) in povms.iter().enumerate() {
        let remaining = n - q;
        let probs: Vec<f64> = povm
            .effects()
            .iter()
            .map(|e| trace_out_with(&sigma, remaining, 0, e).trace().re.max(0.0))
            .collect();
        let total: f64 = probs.iter().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut m = 3;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                m = i;
                break;
            }
        }
        row.push(m as u8);
        if remaining > 1 {
            sigma = trace_out_with(&sigma, remaining, 0, &povm.effects()[m]) / c(probs[m], 0.0);
        }
    }
    row
}

/// Pauli-basis process matrix `χ` with `Λ(X) = Σ_ij χ_ij P_i X P_j`,
/// `χ_ij = Tr[(conj(P_j) ⊗ P_i)† S] / d²`.
fn process_matrix(map: &LocalMap) -> (Vec<CMat>, CMat) {
    let k = map.arity();
    let d = 1usize << k;
    let paulis: Vec<CMat> = (0..(1usize << (2 * k)))
        .map(|idx| {
            (0..k).fold(CMat::from_element(1, 1, ONE), |acc, t| {
                let letter = Pauli::ALL[(idx >> (2 * (k - 1 - t))) & 3].matrix();
                kron(&acc, &CMat::from_fn(2, 2, |i, j| letter[(i, j)]))
            })
        })
        .collect();
    let s = map.superop();
    let n = paulis.len();
    let chi = CMat::from_fn(n, n, |i, j| {
        let basis = kron(&paulis[j].conjugate(), &paulis[i]);
        (basis.adjoint() * s).trace() / c((d * d) as f64, 0.0)
    });
    (paulis, chi)
}

/// Pauli operator on qubits `positions` of an `n`-qubit register, built by
/// explicit Kronecker products.
fn embed_operator(local_letters: &[Pauli], n: usize, positions: &[usize]) -> CMat {
    (0..n).fold(CMat::from_element(1, 1, ONE), |acc, q| {
        let letter = positions
            .iter()
            .position(|&p| p == q)
            .map(|t| local_letters[t])
            .unwrap_or(Pauli::I)
            .matrix();
        kron(&acc, &CMat::from_fn(2, 2, |i, j| letter[(i, j)]))
    })
}

/// Brute-force application of a whole circuit to a `2^N × 2^N` operator,
/// each component expanded as `Σ_ij χ_ij P_i · P_j` with full-size Pauli
/// operators. Test reference only.
pub fn dense_map_circuit_oracle(circuit: &MapCircuit, input: &CMat) -> Result<CMat> {
    let n = circuit.num_qubits();
    if n > ORACLE_MAX_QUBITS {
        return Err(Error::Invalid(format!("oracle limited to N ≤ {ORACLE_MAX_QUBITS}")));
    }
    let d = 1usize << n;
    if input.shape() != (d, d) {
        return Err(Error::Dimension(format!("input must be {d}x{d}")));
    }
    let mut x = input.clone();
    for comp in circuit.components() {
        let k = comp.map.arity();
        let (_, chi) = process_matrix(&comp.map);
        let full: Vec<CMat> = (0..(1usize << (2 * k)))
            .map(|idx| {
                let letters: Vec<Pauli> = (0..k).map(|t| Pauli::ALL[(idx >> (2 * (k - 1 - t))) & 3]).collect();
                embed_operator(&letters, n, &comp.qubits)
            })
            .collect();
        let left: Vec<CMat> = full.iter().map(|p| p * &x).collect();
        let mut next = CMat::zeros(d, d);
        for (j, pj) in full.iter().enumerate() {
            let mut acc = CMat::zeros(d, d);
            for (i, li) in left.iter().enumerate() {
                let w = chi[(i, j)];
                if w != ZERO {
                    acc += li * w;
                }
            }
            next += acc * pj;
        }
        x = next;
    }
    Ok(x)
}

/// Smallest eigenvalue of the dense Hamiltonian and a normalised eigenvector.
pub fn exact_ground_energy(obs: &Observable) -> Result<(f64, DVector<C64>)> {
    if !obs.is_hermitian() {
        return Err(Error::NotHermitian("ground energy needs a Hermitian observable".into()));
    }
    if obs.num_qubits() > DENSE_MAX_QUBITS {
        return Err(Error::Invalid(format!("dense diagonalisation limited to N <= {DENSE_MAX_QUBITS}")));
    }
    let (vals, vecs) = eigh(&obs.to_dense());
    Ok((vals[0], vecs.column(0).into_owned()))
}

/// Outcome of [`oracle_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReport {
    pub num_qubits: usize,
    pub instances: usize,
    /// Largest `|cone − dense| / max(1, |dense|)`.
    pub max_relative_error: f64,
    /// Largest `|forward − backward|`.
    pub max_forward_backward: f64,
}

impl OracleReport {
    pub fn passed(&self, tol_dense: f64, tol_fb: f64) -> bool {
        self.max_relative_error <= tol_dense && self.max_forward_backward <= tol_fb
    }
}

/// Random brickwork circuits of depth 1 or 2 mixing CPTP maps, inverses of
/// noisy maps (trace preserving, not CP) and random Hermitian-Choi maps,
/// contracted against random SIC dual strings and Pauli strings, compared
/// with [`dense_map_circuit_oracle`].
pub fn oracle_check(num_qubits: usize, instances: usize, seed: u64) -> Result<OracleReport> {
    if num_qubits > ORACLE_MAX_QUBITS {
        return Err(Error::Invalid(format!("oracle limited to N ≤ {ORACLE_MAX_QUBITS}")));
    }
    if num_qubits < 2 {
        return Err(Error::Invalid("oracle check needs at least 2 qubits".into()));
    }
    let duals = crate::povm::compute_duals(&SingleQubitPovm::sic())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report =
        OracleReport { num_qubits, instances, max_relative_error: 0.0, max_forward_backward: 0.0 };
    for _ in 0..instances {
        let layers = rng.random_range(1..=2);
        let count = MapCircuit::brickwork(num_qubits, layers, None)?.components().len();
        let maps = (0..count)
            .map(|_| match rng.random_range(0..3) {
                0 => Ok(LocalMap::random_cptp(2, &mut rng)),
                1 => {
                    let noise = LocalMap::random_cptp(2, &mut rng);
                    LocalMap::identity(2).linear_combination(c(0.9, 0.0), &noise, c(0.1, 0.0))?.inverse()
                }
                _ => {
                    let h = crate::linalg::random_hermitian(&mut rng, 16);
                    Ok(LocalMap::from_choi(&crate::maps::ChoiMatrix::new(2, h)?))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let circuit = MapCircuit::brickwork(num_qubits, layers, Some(maps))?;
        let outcome: Vec<usize> = (0..num_qubits).map(|_| rng.random_range(0..4)).collect();
        let letters: Vec<Pauli> = (0..num_qubits).map(|_| Pauli::ALL[rng.random_range(0..4)]).collect();
        let pauli = crate::pauli::PauliString::new(letters)?;
        let inputs: Vec<crate::linalg::Mat2> = outcome.iter().map(|&m| *duals.dual(m)).collect();

        let evaluator = crate::cone::ConeEvaluator::new(&circuit, None)?;
        let probes = pauli.factors();
        let fwd = evaluator.evaluate(&inputs, &probes);
        let bwd = evaluator.evaluate_backward(&inputs, &probes)?;
        let product = inputs.iter().fold(CMat::from_element(1, 1, ONE), |acc, f| {
            kron(&acc, &CMat::from_fn(2, 2, |i, j| f[(i, j)]))
        });
        let dense = (dense_map_circuit_oracle(&circuit, &product)? * pauli.to_matrix()).trace();
        report.max_relative_error = report.max_relative_error.max((fwd - dense).norm() / dense.norm().max(1.0));
        report.max_forward_backward = report.max_forward_backward.max((fwd - bwd).norm());
    }
    Ok(report)
}

/// Initial state of a state-preparation file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    Zero,
    Mixed,
}

#[derive(Debug, Deserialize)]
struct PrepOpRecord {
    qubits: Vec<usize>,
    map: MapPayload,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PrepFile {
    Full {
        num_qubits: usize,
        #[serde(default = "default_initial")]
        initial: InitialState,
        ops: Vec<PrepOpRecord>,
    },
    Bare(Vec<PrepOpRecord>),
}

fn default_initial() -> InitialState {
    InitialState::Zero
}

/// State-preparation circuit: an initial state followed by local maps.
#[derive(Debug, Clone)]
pub struct StatePrep {
    pub num_qubits: usize,
    pub initial: InitialState,
    pub ops: Vec<(Vec<usize>, LocalMap)>,
}

impl StatePrep {
    /// Parse either `{"num_qubits", "initial", "ops": [...]}` or a bare list of
    /// `{"qubits", "map"}` records (register size taken from the largest index,
    /// initial state `|0…0⟩`).
    pub fn parse(text: &str) -> Result<Self> {
        let file: PrepFile = serde_json::from_str(text)?;
        let (num_qubits, initial, records) = match file {
            PrepFile::Full { num_qubits, initial, ops } => (num_qubits, initial, ops),
            PrepFile::Bare(ops) => {
                let n = ops.iter().flat_map(|o| o.qubits.iter()).max().map_or(0, |m| m + 1);
                (n, InitialState::Zero, ops)
            }
        };
        if num_qubits == 0 || num_qubits > DENSE_MAX_QUBITS {
            return Err(Error::Invalid(format!("state preparation needs 1..={DENSE_MAX_QUBITS} qubits")));
        }
        let ops = records
            .into_iter()
            .enumerate()
            .map(|(i, rec)| {
                check_positions(num_qubits, &rec.qubits).map_err(|e| Error::Parse(format!("op {i}: {e}")))?;
                let map = rec.map.resolve(rec.qubits.len()).map_err(|e| Error::Parse(format!("op {i}: {e}")))?;
                Ok((rec.qubits, map))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { num_qubits, initial, ops })
    }

    pub fn prepare(&self) -> Result<DensityMatrix> {
        let start = match self.initial {
            InitialState::Zero => DensityMatrix::zero_state(self.num_qubits),
            InitialState::Mixed => DensityMatrix::maximally_mixed(self.num_qubits),
        };
        self.ops.iter().try_fold(start, |acc, (q, m)| apply_local_map(&acc, m, q))
    }
}

/// Qubits touched by at least one component.
pub fn touched_qubits(circuit: &MapCircuit) -> BTreeSet<usize> {
    circuit.components().iter().flat_map(|c| c.qubits.iter().copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, random_density};
    use crate::povm::compute_duals;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn basis_state(n: usize, index: usize) -> DensityMatrix {
        let d = 1usize << n;
        let mut m = CMat::zeros(d, d);
        m[(index, index)] = ONE;
        DensityMatrix::new(m).unwrap()
    }

    #[test]
    fn identity_map_leaves_state() {
        let rho = DensityMatrix::new(random_density(&mut rng(1), 8)).unwrap();
        let out = apply_local_map(&rho, &LocalMap::identity(2), &[2, 0]).unwrap();
        assert!(max_abs_diff(out.matrix(), rho.matrix()) < 1e-14);
    }

    #[test]
    fn cnot_maps_10_to_11() {
        let out = apply_local_map(&basis_state(2, 0b10), &LocalMap::cnot(), &[0, 1]).unwrap();
        assert!(max_abs_diff(out.matrix(), basis_state(2, 0b11).matrix()) < 1e-15);
        // reversed control/target
        let out = apply_local_map(&basis_state(2, 0b01), &LocalMap::cnot(), &[1, 0]).unwrap();
        assert!(max_abs_diff(out.matrix(), basis_state(2, 0b11).matrix()) < 1e-15);
    }

    #[test]
    fn depolarizing_first_qubit() {
        let out = apply_local_map(&DensityMatrix::zero_state(2), &LocalMap::depolarizing(1, 1.0).unwrap(), &[0]).unwrap();
        let mut zero = CMat::zeros(2, 2);
        zero[(0, 0)] = ONE;
        let expected = kron(&(identity(2) * c(0.5, 0.0)), &zero);
        assert!(max_abs_diff(out.matrix(), &expected) < 1e-15);
    }

    #[test]
    fn apply_rejects_bad_indices() {
        let rho = DensityMatrix::zero_state(2);
        assert!(apply_local_map(&rho, &LocalMap::cnot(), &[0, 2]).is_err());
        assert!(apply_local_map(&rho, &LocalMap::cnot(), &[0]).is_err());
        assert!(apply_local_map(&rho, &LocalMap::cnot(), &[1, 1]).is_err());
    }

    #[test]
    fn perturbed_state_edge_cases() {
        let rho0 = DensityMatrix::new(random_density(&mut rng(2), 16)).unwrap();
        let same = build_perturbed_state(&rho0, 0.0, 9).unwrap();
        assert!(max_abs_diff(same.matrix(), rho0.matrix()) < 1e-14);
        for p in [0.0, 0.05, 0.5, 1.0] {
            let out = build_perturbed_state(&rho0, p, 3).unwrap();
            assert!(out.is_valid());
        }
        assert!(build_perturbed_state(&rho0, 1.5, 0).is_err());

        let full = LocalMap::depolarizing(2, 1.0).unwrap();
        let maps = vec![full; 3];
        let circuit = MapCircuit::brickwork(4, 2, Some(maps)).unwrap();
        let out = apply_circuit(&rho0, &circuit).unwrap();
        assert!(max_abs_diff(out.matrix(), DensityMatrix::maximally_mixed(4).matrix()) < 1e-14);
    }

    #[test]
    fn noisy_cnot_properties() {
        let ideal = noisy_cnot(0.0, 0.0).unwrap();
        assert!(max_abs_diff(ideal.superop(), LocalMap::cnot().superop()) < 1e-14);
        let noisy = noisy_cnot(0.05, 1e-3).unwrap();
        assert!(noisy.is_cptp());
        assert!(max_abs_diff(&noisy.choi().matrix, &LocalMap::cnot().choi().matrix) > 1e-3);
        let full = noisy_cnot(0.0, 1.0).unwrap();
        assert!(max_abs_diff(&full.choi().matrix, &(identity(16) * c(0.25, 0.0))) < 1e-14);
        assert!(noisy_cnot(0.1, -0.1).is_err());
    }

    #[test]
    fn mixed_state_distribution_is_uniform() {
        let povms = vec![SingleQubitPovm::sic(); 3];
        let probs = outcome_distribution(&DensityMatrix::maximally_mixed(3), &povms).unwrap();
        assert!(probs.iter().all(|p| (p - 1.0 / 64.0).abs() < 1e-15));
    }

    #[test]
    fn zero_state_single_qubit_distribution() {
        let probs = outcome_distribution(&DensityMatrix::zero_state(1), &[SingleQubitPovm::sic()]).unwrap();
        let expected = [0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];
        for (p, e) in probs.iter().zip(expected) {
            assert!((p - e).abs() < 1e-15);
        }
    }

    #[test]
    fn distribution_reconstructs_state() {
        let povm = SingleQubitPovm::sic();
        let duals = compute_duals(&povm).unwrap();
        for n in 1..=4 {
            let rho = DensityMatrix::new(random_density(&mut rng(n as u64), 1 << n)).unwrap();
            let probs = outcome_distribution(&rho, &vec![povm.clone(); n]).unwrap();
            let d = 1usize << n;
            let mut recon = CMat::zeros(d, d);
            for (idx, p) in probs.iter().enumerate() {
                let dm = (0..n).fold(CMat::from_element(1, 1, ONE), |acc, q| {
                    let m = (idx >> (2 * (n - 1 - q))) & 3;
                    let f = duals.dual(m);
                    kron(&acc, &CMat::from_fn(2, 2, |i, j| f[(i, j)]))
                });
                recon += dm * c(*p, 0.0);
            }
            assert!(max_abs_diff(&recon, rho.matrix()) < 1e-10);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_matches_marginals() {
        let rho = DensityMatrix::new(random_density(&mut rng(4), 8)).unwrap();
        let povms = vec![SingleQubitPovm::sic(); 3];
        let a = sample_outcomes(&rho, &povms, 500, 17).unwrap();
        let b = sample_outcomes(&rho, &povms, 500, 17).unwrap();
        assert_eq!(a, b);

        let probs = outcome_distribution(&rho, &povms).unwrap();
        let shots = 4000;
        for path in [SamplingPath::Enumerate, SamplingPath::Sequential] {
            let mut failures = 0;
            let seeds = 20;
            for seed in 0..seeds {
                let batch = sample_outcomes_with(&rho, &povms, shots, seed, path).unwrap();
                for q in 0..3 {
                    for m in 0..4u8 {
                        let exact: f64 = probs
                            .iter()
                            .enumerate()
                            .filter(|(idx, _)| ((idx >> (2 * (2 - q))) & 3) as u8 == m)
                            .map(|(_, p)| p)
                            .sum();
                        let freq = batch.outcomes().iter().filter(|r| r[q] == m).count() as f64 / shots as f64;
                        if (freq - exact).abs() > 5.0 * (exact * (1.0 - exact) / shots as f64).sqrt() {
                            failures += 1;
                        }
                    }
                }
            }
            assert!(failures as f64 <= 0.01 * (seeds as f64 * 12.0), "{path:?}: {failures} failures");
        }
    }

    #[test]
    fn batch_csv_round_trip_and_errors() {
        let batch = OutcomeBatch::new(2, vec![vec![0, 3], vec![1, 2]], vec!["sic".into(); 2], 7, "test").unwrap();
        let text = batch.to_csv();
        assert!(text.starts_with("# povm=sic seed=7 N=2 S=2\n"));
        assert_eq!(OutcomeBatch::from_csv(&text).unwrap(), batch);
        assert!(OutcomeBatch::from_csv("# povm=sic seed=1 N=2 S=1\n0,4\n").is_err());
        assert!(OutcomeBatch::from_csv("# povm=sic seed=1 N=2 S=2\n0,1\n").is_err());
        assert!(OutcomeBatch::from_csv("0,1\n").is_err());
        assert!(OutcomeBatch::new(2, vec![vec![0]], vec!["sic".into(); 2], 0, "").is_err());
    }

    #[test]
    fn oracle_identity_and_cnot() {
        let x = random_density(&mut rng(5), 4);
        let id = MapCircuit::brickwork(2, 1, None).unwrap();
        assert!(max_abs_diff(&dense_map_circuit_oracle(&id, &x).unwrap(), &x) < 1e-14);
        let cn = MapCircuit::brickwork(2, 1, Some(vec![LocalMap::cnot()])).unwrap();
        let u = crate::maps::cnot_matrix();
        let expected = &u * &x * u.adjoint();
        assert!(max_abs_diff(&dense_map_circuit_oracle(&cn, &x).unwrap(), &expected) < 1e-14);
        assert!(oracle_check(4, 20, 1).unwrap().passed(1e-10, 1e-12));
        let err = oracle_check(7, 1, 0).unwrap_err().to_string();
        assert!(err.contains("oracle limited to N ≤ 6"), "{err}");
        let big = MapCircuit::brickwork(7, 1, None).unwrap();
        assert!(dense_map_circuit_oracle(&big, &identity(128)).is_err());
    }

    #[test]
    fn oracle_preserves_trace_for_tp_circuits() {
        let mut r = rng(6);
        let maps = (0..3).map(|_| LocalMap::random_cptp(2, &mut r)).collect();
        let circuit = MapCircuit::brickwork(4, 2, Some(maps)).unwrap();
        let x = random_density(&mut r, 16);
        let out = dense_map_circuit_oracle(&circuit, &x).unwrap();
        assert!((out.trace() - ONE).norm() < 1e-10);
        // agrees with sequential superoperator application
        let seq = apply_circuit(&DensityMatrix::new(x).unwrap(), &circuit).unwrap();
        assert!(max_abs_diff(&out, seq.matrix()) < 1e-12);
    }

    #[test]
    fn ground_energies() {
        let z = Observable::from_real_terms(1, &[(1.0, "Z")]).unwrap();
        assert!((exact_ground_energy(&z).unwrap().0 + 1.0).abs() < 1e-14);
        // N=2 periodic, B=0: H = −(XX + YY), spectrum {−2, 0, 0, 2}
        let h = crate::pauli::xx_hamiltonian(2, 1.0, 0.0, true).unwrap();
        let (e0, psi) = exact_ground_energy(&h).unwrap();
        assert!((e0 + 2.0).abs() < 1e-12);
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        let non_herm = Observable::new(1, vec![(c(0.0, 1.0), "X".parse().unwrap())]).unwrap();
        assert!(exact_ground_energy(&non_herm).is_err());
    }

    #[test]
    fn state_prep_parsing() {
        let prep = StatePrep::parse(r#"{"num_qubits": 2, "ops": [{"qubits": [0, 1], "map": "cnot"}]}"#).unwrap();
        assert_eq!(prep.prepare().unwrap(), DensityMatrix::zero_state(2));
        let bare = StatePrep::parse(r#"[{"qubits": [1, 2], "map": "depolarizing(1.0)"}]"#).unwrap();
        assert_eq!(bare.num_qubits, 3);
        let mixed = StatePrep::parse(r#"{"num_qubits": 1, "initial": "mixed", "ops": []}"#).unwrap();
        assert_eq!(mixed.prepare().unwrap(), DensityMatrix::maximally_mixed(1));
        assert!(StatePrep::parse(r#"[{"qubits": [0, 0], "map": "cnot"}]"#).is_err());
        assert!(StatePrep::parse(r#"[{"qubits": [0, 1], "map": "nope"}]"#).is_err());
    }
}
