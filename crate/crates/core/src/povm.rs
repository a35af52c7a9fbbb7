//! Minimal single-qubit IC-POVMs and their dual frames.
//!
//! A dual frame `{D_m}` of an IC-POVM `{Π_m}` reconstructs any operator from
//! its outcome statistics: `A = Σ_m Tr[A Π_m] D_m`. For a minimal (4-outcome)
//! qubit POVM the duals are unique and follow from inverting the 4×4 frame
//! matrix `F_mn = Tr[Π_m Π_n]`.

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, mat2_to_dyn, min_eig, Mat2, C64, ONE, ZERO};
use crate::pauli::Pauli;

/// Largest frame-matrix condition number accepted as informationally complete.
pub const MAX_FRAME_CONDITION: f64 = 1e12;

/// Bloch vectors of the tetrahedral SIC used by [`SingleQubitPovm::sic`].
pub fn tetrahedron() -> [[f64; 3]; 4] {
    let s2 = 2f64.sqrt();
    [
        [0.0, 0.0, 1.0],
        [2.0 * s2 / 3.0, 0.0, -1.0 / 3.0],
        [-s2 / 3.0, (2.0f64 / 3.0).sqrt(), -1.0 / 3.0],
        [-s2 / 3.0, -(2.0f64 / 3.0).sqrt(), -1.0 / 3.0],
    ]
}

/// `a I + b (s · σ)`.
fn bloch_operator(a: f64, b: f64, s: [f64; 3]) -> Mat2 {
    Pauli::I.matrix() * c(a, 0.0)
        + (Pauli::X.matrix() * c(s[0], 0.0) + Pauli::Y.matrix() * c(s[1], 0.0) + Pauli::Z.matrix() * c(s[2], 0.0))
            * c(b, 0.0)
}

fn trace_product(a: &Mat2, b: &Mat2) -> C64 {
    (a * b).trace()
}

/// Four-outcome measurement on one qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleQubitPovm {
    label: String,
    effects: [Mat2; 4],
}

impl SingleQubitPovm {
    /// Validate effects: Hermitian, PSD, summing to identity, and IC.
    pub fn new(label: impl Into<String>, effects: [Mat2; 4]) -> Result<Self> {
        let label = label.into();
        let mut sum = Mat2::zeros();
        for (m, e) in effects.iter().enumerate() {
            let d = mat2_to_dyn(e);
            if (e - e.adjoint()).camax() > 1e-12 {
                return Err(Error::NotHermitian(format!("effect {m} of POVM {label}")));
            }
            if min_eig(&d) < -1e-12 {
                return Err(Error::Invalid(format!("effect {m} of POVM {label} is not positive")));
            }
            sum += e;
        }
        if (sum - Mat2::identity()).camax() > 1e-12 {
            return Err(Error::Invalid(format!("effects of POVM {label} do not sum to identity")));
        }
        frame_condition(&effects)?;
        Ok(Self { label, effects })
    }

    /// Symmetric tetrahedral POVM `Π_m = (I + s_m·σ)/4`.
    pub fn sic() -> Self {
        let effects = tetrahedron().map(|s| bloch_operator(0.25, 0.25, s));
        Self { label: "sic".to_string(), effects }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn effects(&self) -> &[Mat2; 4] {
        &self.effects
    }

    /// Outcome probabilities `Tr[ρ Π_m]` for a single-qubit state.
    pub fn probabilities(&self, rho: &Mat2) -> [f64; 4] {
        self.effects.map(|e| trace_product(rho, &e).re)
    }

    pub fn to_json(&self) -> String {
        let file = PovmFile { label: self.label.clone(), effects: self.effects.iter().map(encode_mat2).collect() };
        serde_json::to_string_pretty(&file).expect("povm serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PovmFile = serde_json::from_str(text)?;
        if file.effects.len() != 4 {
            return Err(Error::Invalid(format!("expected 4 effects, found {}", file.effects.len())));
        }
        let effects = [
            decode_mat2(&file.effects[0]),
            decode_mat2(&file.effects[1]),
            decode_mat2(&file.effects[2]),
            decode_mat2(&file.effects[3]),
        ];
        Self::new(file.label, effects)
    }
}

type Mat2Json = [[[f64; 2]; 2]; 2];

fn encode_mat2(m: &Mat2) -> Mat2Json {
    let e = |i, j| {
        let z: C64 = m[(i, j)];
        [z.re, z.im]
    };
    [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
}

fn decode_mat2(m: &Mat2Json) -> Mat2 {
    let e = |i: usize, j: usize| c(m[i][j][0], m[i][j][1]);
    Mat2::new(e(0, 0), e(0, 1), e(1, 0), e(1, 1))
}

#[derive(Serialize, Deserialize)]
struct PovmFile {
    label: String,
    effects: Vec<Mat2Json>,
}

fn frame_matrix(effects: &[Mat2; 4]) -> Matrix4<f64> {
    Matrix4::from_fn(|m, n| trace_product(&effects[m], &effects[n]).re)
}

fn frame_condition(effects: &[Mat2; 4]) -> Result<f64> {
    let sv = frame_matrix(effects).singular_values();
    let cond = sv.max() / sv.min();
    if !cond.is_finite() || cond > MAX_FRAME_CONDITION {
        return Err(Error::NotInformationallyComplete { cond });
    }
    Ok(cond)
}

/// Dual effects paired with a [`SingleQubitPovm`].
#[derive(Debug, Clone, PartialEq)]
pub struct DualFrame {
    label: String,
    duals: [Mat2; 4],
}

impl DualFrame {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn duals(&self) -> &[Mat2; 4] {
        &self.duals
    }

    pub fn dual(&self, m: usize) -> &Mat2 {
        &self.duals[m]
    }

    /// `Σ_m Tr[A Π_m] D_m`.
    pub fn reconstruct(&self, povm: &SingleQubitPovm, a: &Mat2) -> Mat2 {
        povm.effects()
            .iter()
            .zip(self.duals.iter())
            .fold(Mat2::zeros(), |acc, (e, d)| acc + d * trace_product(a, e))
    }
}

/// Canonical duals `D_m = Σ_n (F⁻¹)_{mn} Π_n`.
pub fn compute_duals(povm: &SingleQubitPovm) -> Result<DualFrame> {
    frame_condition(povm.effects())?;
    let inv = frame_matrix(povm.effects())
        .try_inverse()
        .ok_or(Error::NotInformationallyComplete { cond: f64::INFINITY })?;
    let effects = povm.effects();
    let duals = std::array::from_fn(|m| {
        (0..4).fold(Mat2::zeros(), |acc, n| acc + effects[n] * c(inv[(m, n)], 0.0))
    });
    Ok(DualFrame { label: povm.label().to_string(), duals })
}

/// Matrix units `E_ab = |a⟩⟨b|` of a qubit.
pub fn matrix_units() -> [Mat2; 4] {
    [
        Mat2::new(ONE, ZERO, ZERO, ZERO),
        Mat2::new(ZERO, ONE, ZERO, ZERO),
        Mat2::new(ZERO, ZERO, ONE, ZERO),
        Mat2::new(ZERO, ZERO, ZERO, ONE),
    ]
}

/// Closed form of the SIC duals, `(I + 3 s_m·σ)/2`.
pub fn sic_duals_closed_form() -> [Mat2; 4] {
    tetrahedron().map(|s| bloch_operator(0.5, 1.5, s))
}
