//! Pauli strings, weighted Pauli-sum observables and the XX-chain Hamiltonian.
//!
//! Observables are sums `O = Σ_k c_k P_k` with complex coefficients and
//! `P_k` a tensor product of single-qubit Pauli letters. Qubits are indexed
//! from 0; in text form the leftmost letter acts on qubit 0.
//!
//! The JSON observable format is
//!
//! ```text
//! {"num_qubits": 2, "terms": [{"coeff": [1.0, 0.0], "pauli": "ZZ"}]}
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::densesim::DensityMatrix;
use crate::error::{Error, Result};
use crate::linalg::{c, kron, CMat, Mat2, C64, ONE, ZERO};

/// Single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> Mat2 {
        match self {
            Pauli::I => Mat2::new(ONE, ZERO, ZERO, ONE),
            Pauli::X => Mat2::new(ZERO, ONE, ONE, ZERO),
            Pauli::Y => Mat2::new(ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO),
            Pauli::Z => Mat2::new(ONE, ZERO, ZERO, -ONE),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(ch: char) -> Option<Pauli> {
        match ch {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    /// Action on a computational basis bit: `P|b⟩ = phase |b ⊕ flip⟩`.
    fn basis_action(self, bit: usize) -> (usize, C64) {
        match self {
            Pauli::I => (0, ONE),
            Pauli::X => (1, ONE),
            Pauli::Y => (1, if bit == 0 { c(0.0, 1.0) } else { c(0.0, -1.0) }),
            Pauli::Z => (0, if bit == 0 { ONE } else { -ONE }),
        }
    }
}

/// Tensor product of Pauli letters, one per qubit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::Invalid("pauli string must act on at least one qubit".into()));
        }
        Ok(Self { letters })
    }

    pub fn identity(num_qubits: usize) -> Self {
        Self { letters: vec![Pauli::I; num_qubits] }
    }

    /// String with the given letters on the listed qubits and identity elsewhere.
    pub fn from_sparse(num_qubits: usize, ops: &[(usize, Pauli)]) -> Result<Self> {
        let mut letters = vec![Pauli::I; num_qubits];
        for &(q, p) in ops {
            if q >= num_qubits {
                return Err(Error::Invalid(format!("qubit {q} out of range for {num_qubits} qubits")));
            }
            letters[q] = p;
        }
        Self::new(letters)
    }

    pub fn num_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn letter(&self, q: usize) -> Pauli {
        self.letters[q]
    }

    pub fn weight(&self) -> usize {
        self.letters.iter().filter(|&&p| p != Pauli::I).count()
    }

    /// Per-qubit 2×2 factors.
    pub fn factors(&self) -> Vec<Mat2> {
        self.letters.iter().map(|p| p.matrix()).collect()
    }

    /// Dense `2^N × 2^N` matrix.
    pub fn to_matrix(&self) -> CMat {
        self.letters.iter().fold(CMat::from_element(1, 1, ONE), |acc, p| {
            let m = p.matrix();
            kron(&acc, &CMat::from_fn(2, 2, |i, j| m[(i, j)]))
        })
    }

    /// `Tr[ρ P]` without forming `P`: `P|x⟩ = φ(x)|x ⊕ f⟩`.
    pub fn expectation(&self, rho: &CMat) -> C64 {
        let n = self.num_qubits();
        let mut acc = ZERO;
        for x in 0..(1usize << n) {
            let mut y = x;
            let mut phase = ONE;
            for (q, p) in self.letters.iter().enumerate() {
                let shift = n - 1 - q;
                let (flip, ph) = p.basis_action((x >> shift) & 1);
                y ^= flip << shift;
                phase *= ph;
            }
            // ⟨x|ρ P|x⟩ = φ(x) ρ[x, x⊕f]
            acc += phase * rho[(x, y)];
        }
        acc
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.letters {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .enumerate()
            .map(|(i, ch)| {
                Pauli::from_char(ch).ok_or_else(|| {
                    Error::Parse(format!("malformed Pauli letter {ch:?} at position {i} in {s:?}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        PauliString::new(letters)
    }
}

/// Weighted sum of Pauli strings.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    num_qubits: usize,
    terms: Vec<(C64, PauliString)>,
    hermitian: bool,
}

impl Observable {
    /// Build an observable, merging duplicate strings (first occurrence keeps
    /// its position) and recording whether the result is Hermitian.
    pub fn new(num_qubits: usize, terms: Vec<(C64, PauliString)>) -> Result<Self> {
        if num_qubits == 0 {
            return Err(Error::Invalid("observable must act on at least one qubit".into()));
        }
        let mut merged: Vec<(C64, PauliString)> = Vec::with_capacity(terms.len());
        for (coeff, string) in terms {
            if !(coeff.re.is_finite() && coeff.im.is_finite()) {
                return Err(Error::Invalid(format!("non-finite coefficient for {string}")));
            }
            if string.num_qubits() != num_qubits {
                return Err(Error::Invalid(format!(
                    "pauli string {string} has length {} but observable has {num_qubits} qubits",
                    string.num_qubits()
                )));
            }
            match merged.iter_mut().find(|(_, s)| *s == string) {
                Some((c0, _)) => *c0 += coeff,
                None => merged.push((coeff, string)),
            }
        }
        // Distinct Pauli strings are linearly independent and Hermitian, so the
        // sum is Hermitian iff every merged coefficient is real.
        let hermitian = merged
            .iter()
            .all(|(c0, _)| c0.im.abs() <= 1e-12 * (1.0 + c0.re.abs()));
        Ok(Self { num_qubits, terms: merged, hermitian })
    }

    pub fn from_real_terms(num_qubits: usize, terms: &[(f64, &str)]) -> Result<Self> {
        let terms = terms
            .iter()
            .map(|&(w, s)| Ok((c(w, 0.0), s.parse::<PauliString>()?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(num_qubits, terms)
    }

    /// The identity observable with unit coefficient.
    pub fn identity(num_qubits: usize) -> Self {
        Self {
            num_qubits,
            terms: vec![(ONE, PauliString::identity(num_qubits))],
            hermitian: true,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn terms(&self) -> &[(C64, PauliString)] {
        &self.terms
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn scaled(&self, factor: C64) -> Self {
        let terms = self.terms.iter().map(|(w, s)| (w * factor, s.clone())).collect();
        Self::new(self.num_qubits, terms).expect("scaling preserves validity")
    }

    pub fn to_dense(&self) -> CMat {
        let d = 1usize << self.num_qubits;
        self.terms
            .iter()
            .fold(CMat::zeros(d, d), |acc, (w, s)| acc + s.to_matrix() * *w)
    }

    pub fn to_json(&self) -> String {
        let file = ObservableFile {
            num_qubits: self.num_qubits,
            terms: self
                .terms
                .iter()
                .map(|(w, s)| TermRecord { coeff: [w.re, w.im], pauli: s.to_string() })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("observable serialises")
    }
}

#[derive(Serialize, Deserialize)]
struct TermRecord {
    coeff: [f64; 2],
    pauli: String,
}

#[derive(Serialize, Deserialize)]
struct ObservableFile {
    num_qubits: usize,
    terms: Vec<TermRecord>,
}

/// Parse the JSON observable format.
pub fn parse_observable(text: &str) -> Result<Observable> {
    let file: ObservableFile = serde_json::from_str(text)?;
    let terms = file
        .terms
        .into_iter()
        .map(|t| {
            let [re, im] = t.coeff;
            Ok((c(re, im), t.pauli.parse::<PauliString>()?))
        })
        .collect::<Result<Vec<_>>>()?;
    Observable::new(file.num_qubits, terms)
}

/// `H = −J [ Σ_i (X_i X_{i+1} + Y_i Y_{i+1}) / 2 + B Σ_i Z_i ]`.
///
/// With `periodic`, the bond `(N−1, 0)` is added; for `N = 2` it coincides with
/// bond `(0, 1)` and the two are merged.
pub fn xx_hamiltonian(n: usize, j: f64, b: f64, periodic: bool) -> Result<Observable> {
    if n < 2 {
        return Err(Error::Invalid(format!("xx_hamiltonian needs N >= 2, got {n}")));
    }
    let mut bonds: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    if periodic {
        bonds.push((n - 1, 0));
    }
    let mut terms = Vec::new();
    for (a, bq) in bonds {
        for p in [Pauli::X, Pauli::Y] {
            terms.push((c(-j / 2.0, 0.0), PauliString::from_sparse(n, &[(a, p), (bq, p)])?));
        }
    }
    if j * b != 0.0 {
        for q in 0..n {
            terms.push((c(-j * b, 0.0), PauliString::from_sparse(n, &[(q, Pauli::Z)])?));
        }
    }
    Observable::new(n, terms)
}

/// Exact `Tr[ρ O] = Σ_k c_k Tr[ρ P_k]` by dense contraction.
pub fn expectation_oracle(rho: &DensityMatrix, obs: &Observable) -> Result<C64> {
    if rho.num_qubits() != obs.num_qubits() {
        return Err(Error::Dimension(format!(
            "state has {} qubits, observable {}",
            rho.num_qubits(),
            obs.num_qubits()
        )));
    }
    Ok(obs
        .terms()
        .iter()
        .map(|(w, s)| w * s.expectation(rho.matrix()))
        .sum())
}
