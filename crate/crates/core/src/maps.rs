//! Linear maps on one or a few qubits.
//!
//! Maps are stored as superoperators in the column-stacking convention,
//! `vec(Λ(X)) = S · vec(X)` with `vec(A X B) = (Bᵀ ⊗ A) vec(X)`. The Choi
//! matrix uses input ⊗ output ordering, `C = Σ_ab |a⟩⟨b| ⊗ Λ(|a⟩⟨b|)`, so that
//! `C[(a, i), (b, j)] = S[i + d j, a + d b]` and trace preservation reads
//! `Tr_out C = I`.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    apply_superop_embedded, c, condition_number, ginibre, haar_unitary, identity, inv_sqrt_psd,
    is_hermitian, kron, max_abs_diff, min_eig, partial_trace_second, unvec_col, vec_col, CMat, C64,
    ONE, ZERO,
};

/// Tolerance for the CP/TP/HP checks.
pub const CHECK_TOL: f64 = 1e-10;
/// Largest superoperator condition number accepted by [`LocalMap::inverse`].
pub const MAX_INVERSE_CONDITION: f64 = 1e10;

/// Structural properties of a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapFlags {
    pub cp: bool,
    pub tp: bool,
    pub hermiticity_preserving: bool,
}

/// A linear map on `arity` qubits.
#[derive(Debug, Clone)]
pub struct LocalMap {
    arity: usize,
    superop: CMat,
    flags: OnceLock<MapFlags>,
}

impl PartialEq for LocalMap {
    fn eq(&self, other: &Self) -> bool {
        self.arity == other.arity && self.superop == other.superop
    }
}

impl LocalMap {
    pub fn from_superop(arity: usize, superop: CMat) -> Result<Self> {
        if arity == 0 {
            return Err(Error::Invalid("map arity must be positive".into()));
        }
        let dim = 1usize << (2 * arity);
        if superop.shape() != (dim, dim) {
            return Err(Error::Dimension(format!(
                "superoperator for arity {arity} must be {dim}x{dim}, got {}x{}",
                superop.nrows(),
                superop.ncols()
            )));
        }
        if superop.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Invalid("superoperator has non-finite entries".into()));
        }
        Ok(Self { arity, superop, flags: OnceLock::new() })
    }

    fn raw(arity: usize, superop: CMat) -> Self {
        Self { arity, superop, flags: OnceLock::new() }
    }

    pub fn identity(arity: usize) -> Self {
        Self::raw(arity, identity(1 << (2 * arity)))
    }

    /// Conjugation `X ↦ U X U†`.
    pub fn unitary(u: &CMat) -> Result<Self> {
        let d = u.nrows();
        if !u.is_square() || !d.is_power_of_two() || d < 2 {
            return Err(Error::Dimension(format!("unitary must be square with power-of-two size, got {d}")));
        }
        if max_abs_diff(&(u * u.adjoint()), &identity(d)) > 1e-10 {
            return Err(Error::Invalid("matrix is not unitary".into()));
        }
        Ok(Self::raw(d.trailing_zeros() as usize, kron(&u.conjugate(), u)))
    }

    /// `X ↦ Σ_i K_i X K_i†`.
    pub fn from_kraus(ops: &[CMat]) -> Result<Self> {
        let first = ops.first().ok_or_else(|| Error::Invalid("empty Kraus list".into()))?;
        let d = first.nrows();
        if !d.is_power_of_two() || d < 2 || ops.iter().any(|k| k.shape() != (d, d)) {
            return Err(Error::Dimension("Kraus operators must share a power-of-two square shape".into()));
        }
        let superop = ops.iter().fold(CMat::zeros(d * d, d * d), |acc, k| acc + kron(&k.conjugate(), k));
        Ok(Self::raw(d.trailing_zeros() as usize, superop))
    }

    pub fn from_choi(choi: &ChoiMatrix) -> Self {
        let d = 1usize << choi.arity;
        let m = &choi.matrix;
        let superop = CMat::from_fn(d * d, d * d, |row, col| {
            let (i, j) = (row % d, row / d);
            let (a, b) = (col % d, col / d);
            m[(a * d + i, b * d + j)]
        });
        Self::raw(choi.arity, superop)
    }

    /// `X ↦ (1 − p) X + p Tr[X] I / d`.
    pub fn depolarizing(arity: usize, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Invalid(format!("depolarizing probability {p} outside [0, 1]")));
        }
        let d = 1usize << arity;
        let vid = vec_col(&identity(d));
        let superop = identity(d * d) * c(1.0 - p, 0.0) + (&vid * vid.transpose()) * c(p / d as f64, 0.0);
        Ok(Self::raw(arity, superop))
    }

    /// Single-qubit reset `σ ↦ Tr[σ] |0⟩⟨0|`.
    pub fn zreset() -> Self {
        let mut zero = CMat::zeros(2, 2);
        zero[(0, 0)] = ONE;
        let vid = vec_col(&identity(2));
        Self::raw(1, vec_col(&zero) * vid.transpose())
    }

    /// CNOT conjugation, control on the first qubit.
    pub fn cnot() -> Self {
        Self::unitary(&cnot_matrix()).expect("CNOT is unitary")
    }

    /// Haar-random unitary conjugation.
    pub fn random_unitary<R: Rng + ?Sized>(arity: usize, rng: &mut R) -> Self {
        Self::unitary(&haar_unitary(rng, 1 << arity)).expect("Haar sample is unitary")
    }

    /// Random CPTP map from the Ginibre–Choi ensemble: `W = G G†`,
    /// `C = (X^{-1/2} ⊗ I) W (X^{-1/2} ⊗ I)` with `X = Tr_out W`.
    pub fn random_cptp<R: Rng + ?Sized>(arity: usize, rng: &mut R) -> Self {
        let d = 1usize << arity;
        let g = ginibre(rng, d * d, d * d);
        let w = &g * g.adjoint();
        let x = partial_trace_second(&w, d, d);
        let scale = kron(&inv_sqrt_psd(&x), &identity(d));
        let choi = &scale * w * &scale;
        Self::from_choi(&ChoiMatrix { arity, matrix: choi })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn dim(&self) -> usize {
        1 << self.arity
    }

    pub fn superop(&self) -> &CMat {
        &self.superop
    }

    /// Apply to an operator on exactly `arity` qubits.
    pub fn apply(&self, x: &CMat) -> CMat {
        let d = self.dim();
        assert_eq!(x.shape(), (d, d), "operator does not match map arity");
        unvec_col(&(&self.superop * vec_col(x)), d)
    }

    pub fn choi(&self) -> ChoiMatrix {
        ChoiMatrix::from_superop(self.arity, &self.superop)
    }

    /// Hilbert–Schmidt adjoint: the superoperator's conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::raw(self.arity, self.superop.adjoint())
    }

    /// Bilinear dual `Λᵀ`, defined by `Tr[Λ(A) B] = Tr[A Λᵀ(B)]` for all `A, B`.
    ///
    /// Coincides with [`adjoint`](Self::adjoint) for Hermiticity-preserving maps.
    pub fn dual(&self) -> Self {
        let d = self.dim();
        let t = |idx: usize| (idx % d) * d + idx / d;
        let s = &self.superop;
        Self::raw(self.arity, CMat::from_fn(d * d, d * d, |r, col| s[(t(col), t(r))]))
    }

    /// Matrix inverse of the superoperator.
    pub fn inverse(&self) -> Result<Self> {
        let cond = condition_number(&self.superop);
        if !cond.is_finite() || cond > MAX_INVERSE_CONDITION {
            return Err(Error::Singular { cond });
        }
        let inv = self.superop.clone().try_inverse().ok_or(Error::Singular { cond })?;
        Ok(Self::raw(self.arity, inv))
    }

    /// `self` followed by `next`, i.e. `next ∘ self`.
    pub fn then(&self, next: &LocalMap) -> Result<Self> {
        compose(&[self.clone(), next.clone()])
    }

    /// `α self + β other`.
    pub fn linear_combination(&self, alpha: C64, other: &LocalMap, beta: C64) -> Result<Self> {
        if self.arity != other.arity {
            return Err(Error::Dimension("arity mismatch in linear combination".into()));
        }
        Ok(Self::raw(self.arity, &self.superop * alpha + &other.superop * beta))
    }

    /// Extend to `n` qubits acting on `positions` (identity elsewhere).
    pub fn tensor_extend(&self, n: usize, positions: &[usize]) -> Result<Self> {
        if positions.len() != self.arity {
            return Err(Error::Dimension(format!(
                "map of arity {} embedded on {} positions",
                self.arity,
                positions.len()
            )));
        }
        check_positions(n, positions)?;
        let d = 1usize << n;
        let mut superop = CMat::zeros(d * d, d * d);
        for b in 0..d {
            for a in 0..d {
                let mut unit = CMat::zeros(d, d);
                unit[(a, b)] = ONE;
                let image = apply_superop_embedded(&unit, n, positions, &self.superop);
                superop.set_column(a + d * b, &vec_col(&image));
            }
        }
        Ok(Self::raw(n, superop))
    }

    /// `self ⊗ other` on `arity + other.arity` qubits.
    pub fn tensor(&self, other: &LocalMap) -> Result<Self> {
        let n = self.arity + other.arity;
        let first: Vec<usize> = (0..self.arity).collect();
        let second: Vec<usize> = (self.arity..n).collect();
        self.tensor_extend(n, &first)?.then(&other.tensor_extend(n, &second)?)
    }

    /// CP/TP/HP flags at an explicit tolerance.
    pub fn check(&self, tol: f64) -> MapFlags {
        let choi = self.choi();
        let hermiticity_preserving = is_hermitian(&choi.matrix, tol);
        let cp = hermiticity_preserving && min_eig(&choi.matrix) >= -tol;
        let tp = choi.tp_residual() <= tol;
        MapFlags { cp, tp, hermiticity_preserving }
    }

    /// Flags at [`CHECK_TOL`], computed once and cached.
    pub fn flags(&self) -> MapFlags {
        *self.flags.get_or_init(|| self.check(CHECK_TOL))
    }

    pub fn is_cptp(&self) -> bool {
        let f = self.flags();
        f.cp && f.tp
    }
}

/// Compose maps of equal arity; later entries are applied later.
pub fn compose(maps: &[LocalMap]) -> Result<LocalMap> {
    let first = maps.first().ok_or_else(|| Error::Invalid("nothing to compose".into()))?;
    let arity = first.arity;
    if maps.iter().any(|m| m.arity != arity) {
        return Err(Error::Dimension("arity mismatch in composition".into()));
    }
    let superop = maps.iter().skip(1).fold(first.superop.clone(), |acc, m| &m.superop * acc);
    Ok(LocalMap::raw(arity, superop))
}

pub(crate) fn check_positions(n: usize, positions: &[usize]) -> Result<()> {
    for (i, &p) in positions.iter().enumerate() {
        if p >= n {
            return Err(Error::Invalid(format!("qubit index {p} out of range for {n} qubits")));
        }
        if positions[..i].contains(&p) {
            return Err(Error::Invalid(format!("qubit index {p} repeated")));
        }
    }
    Ok(())
}

pub fn cnot_matrix() -> CMat {
    let mut u = CMat::zeros(4, 4);
    u[(0, 0)] = ONE;
    u[(1, 1)] = ONE;
    u[(2, 3)] = ONE;
    u[(3, 2)] = ONE;
    u
}

pub fn rx(theta: f64) -> CMat {
    let (s, co) = (theta / 2.0).sin_cos();
    CMat::from_row_slice(2, 2, &[c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0)])
}

pub fn rz(theta: f64) -> CMat {
    CMat::from_row_slice(2, 2, &[C64::from_polar(1.0, -theta / 2.0), ZERO, ZERO, C64::from_polar(1.0, theta / 2.0)])
}

/// Choi matrix with input ⊗ output index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    pub arity: usize,
    pub matrix: CMat,
}

impl ChoiMatrix {
    pub fn new(arity: usize, matrix: CMat) -> Result<Self> {
        let dim = 1usize << (2 * arity);
        if matrix.shape() != (dim, dim) {
            return Err(Error::Dimension(format!("Choi matrix for arity {arity} must be {dim}x{dim}")));
        }
        Ok(Self { arity, matrix })
    }

    pub fn from_superop(arity: usize, superop: &CMat) -> Self {
        let d = 1usize << arity;
        let matrix = CMat::from_fn(d * d, d * d, |row, col| {
            let (a, i) = (row / d, row % d);
            let (b, j) = (col / d, col % d);
            superop[(i + d * j, a + d * b)]
        });
        Self { arity, matrix }
    }

    pub fn dim_in(&self) -> usize {
        1 << self.arity
    }

    pub fn tr_out(&self) -> CMat {
        partial_trace_second(&self.matrix, self.dim_in(), self.dim_in())
    }

    /// `max |Tr_out C − I|`.
    pub fn tp_residual(&self) -> f64 {
        max_abs_diff(&self.tr_out(), &identity(self.dim_in()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eig(&self.matrix)
    }

    pub fn to_map(&self) -> LocalMap {
        LocalMap::from_choi(self)
    }
}

/// Map description inside circuit and state-preparation files: either a
/// preset name or an explicit superoperator.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MapPayload {
    Preset(String),
    Matrix {
        convention: String,
        /// Row-major, each entry `[re, im]`.
        superop: Vec<Vec<[f64; 2]>>,
    },
}

impl MapPayload {
    pub fn from_map(map: &LocalMap) -> Self {
        let s = map.superop();
        let superop = (0..s.nrows())
            .map(|r| (0..s.ncols()).map(|col| [s[(r, col)].re, s[(r, col)].im]).collect())
            .collect();
        MapPayload::Matrix { convention: "col-vec".to_string(), superop }
    }

    /// Resolve into a map acting on `arity` qubits.
    pub fn resolve(&self, arity: usize) -> Result<LocalMap> {
        match self {
            MapPayload::Matrix { convention, superop } => {
                if convention != "col-vec" {
                    return Err(Error::Parse(format!("unsupported superoperator convention {convention:?}")));
                }
                let rows = superop.len();
                if superop.iter().any(|r| r.len() != rows) {
                    return Err(Error::Parse("superoperator rows have inconsistent lengths".into()));
                }
                let m = CMat::from_fn(rows, rows, |r, col| c(superop[r][col][0], superop[r][col][1]));
                LocalMap::from_superop(arity, m)
            }
            MapPayload::Preset(text) => resolve_preset(text, arity),
        }
    }
}

fn preset_args(text: &str) -> Result<(String, Vec<f64>)> {
    let text = text.trim();
    match text.find('(') {
        None => Ok((text.to_string(), Vec::new())),
        Some(open) => {
            let close = text
                .rfind(')')
                .filter(|&cl| cl > open && cl == text.len() - 1)
                .ok_or_else(|| Error::Parse(format!("unbalanced parentheses in preset {text:?}")))?;
            let args = text[open + 1..close]
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad numeric argument {s:?} in preset {text:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((text[..open].trim().to_string(), args))
        }
    }
}

fn expect_args(name: &str, args: &[f64], count: usize) -> Result<()> {
    if args.len() != count {
        return Err(Error::Parse(format!("preset {name} expects {count} argument(s), got {}", args.len())));
    }
    Ok(())
}

fn seed_arg(name: &str, value: f64) -> Result<u64> {
    if value < 0.0 || value.fract() != 0.0 {
        return Err(Error::Parse(format!("preset {name} needs a non-negative integer seed")));
    }
    Ok(value as u64)
}

/// Presets: `identity`, `cnot`, `noisy_cnot(theta,p)`, `random_unitary(seed)`,
/// `random_cptp(seed)`, `depolarizing(p)`, `zreset`.
pub fn resolve_preset(text: &str, arity: usize) -> Result<LocalMap> {
    let (name, args) = preset_args(text)?;
    let need_two = |name: &str| {
        if arity != 2 {
            Err(Error::Invalid(format!("preset {name} acts on 2 qubits, got {arity}")))
        } else {
            Ok(())
        }
    };
    match name.as_str() {
        "identity" => {
            expect_args(&name, &args, 0)?;
            Ok(LocalMap::identity(arity))
        }
        "cnot" => {
            expect_args(&name, &args, 0)?;
            need_two(&name)?;
            Ok(LocalMap::cnot())
        }
        "noisy_cnot" => {
            expect_args(&name, &args, 2)?;
            need_two(&name)?;
            crate::densesim::noisy_cnot(args[0], args[1])
        }
        "random_unitary" => {
            expect_args(&name, &args, 1)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed_arg(&name, args[0])?);
            Ok(LocalMap::random_unitary(arity, &mut rng))
        }
        "random_cptp" => {
            expect_args(&name, &args, 1)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed_arg(&name, args[0])?);
            Ok(LocalMap::random_cptp(arity, &mut rng))
        }
        "depolarizing" => {
            expect_args(&name, &args, 1)?;
            LocalMap::depolarizing(arity, args[0])
        }
        "zreset" => {
            expect_args(&name, &args, 0)?;
            let z = LocalMap::zreset();
            (1..arity).try_fold(z.clone(), |acc, _| acc.tensor(&z))
        }
        other => Err(Error::Parse(format!("unknown map preset {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{ginibre, random_density, trace};
    use proptest::prelude::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn arbitrary_map(arity: usize, seed: u64) -> LocalMap {
        let d = 1usize << (2 * arity);
        LocalMap::from_superop(arity, ginibre(&mut rng(seed), d, d)).unwrap()
    }

    #[test]
    fn identity_choi_is_maximally_entangled() {
        for k in 1..=2 {
            let choi = LocalMap::identity(k).choi();
            let d = 1usize << k;
            let expected = CMat::from_fn(d * d, d * d, |r, col| {
                let (a, i) = (r / d, r % d);
                let (b, j) = (col / d, col % d);
                if a == i && b == j { ONE } else { ZERO }
            });
            assert!(max_abs_diff(&choi.matrix, &expected) < 1e-15);
            assert!((trace(&choi.matrix) - c(d as f64, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn fully_depolarizing_choi() {
        let choi = LocalMap::depolarizing(1, 1.0).unwrap().choi();
        let expected = identity(4) * c(0.5, 0.0);
        assert!(max_abs_diff(&choi.matrix, &expected) < 1e-15);
    }

    #[test]
    fn unitary_adjoint_is_inverse_conjugation() {
        let u = haar_unitary(&mut rng(1), 4);
        let adj = LocalMap::unitary(&u).unwrap().adjoint();
        let expected = LocalMap::unitary(&u.adjoint()).unwrap();
        assert!(max_abs_diff(adj.superop(), expected.superop()) < 1e-13);
    }

    #[test]
    fn depolarizing_is_self_adjoint() {
        let m = LocalMap::depolarizing(2, 0.3).unwrap();
        assert!(max_abs_diff(m.superop(), &m.superop().adjoint()) < 1e-15);
    }

    #[test]
    fn inverse_of_identity_and_singular_failure() {
        let inv = LocalMap::identity(2).inverse().unwrap();
        assert!(max_abs_diff(inv.superop(), &identity(16)) < 1e-14);
        let err = LocalMap::depolarizing(1, 1.0).unwrap().inverse().unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn inverse_of_mild_noise_is_tp_but_not_cp() {
        let e = LocalMap::random_cptp(2, &mut rng(7));
        let noise = LocalMap::identity(2).linear_combination(c(0.95, 0.0), &e, c(0.05, 0.0)).unwrap();
        assert!(noise.is_cptp());
        let inv = noise.inverse().unwrap();
        let flags = inv.flags();
        assert!(!flags.cp);
        assert!(flags.tp);
        assert!(flags.hermiticity_preserving);
        assert!(inv.choi().min_eigenvalue() < 0.0);
        let round = compose(&[noise, inv]).unwrap();
        let rel = max_abs_diff(round.superop(), &identity(16));
        assert!(rel < 1e-8);
    }

    #[test]
    fn compose_unitary_and_inverse_is_identity() {
        let u = haar_unitary(&mut rng(2), 4);
        let m = compose(&[LocalMap::unitary(&u).unwrap(), LocalMap::unitary(&u.adjoint()).unwrap()]).unwrap();
        assert!(max_abs_diff(m.superop(), &identity(16)) < 1e-13);
    }

    #[test]
    fn depolarizing_composition_closed_form() {
        let (p1, p2) = (0.2, 0.35);
        let m = compose(&[LocalMap::depolarizing(1, p1).unwrap(), LocalMap::depolarizing(1, p2).unwrap()]).unwrap();
        let expected = LocalMap::depolarizing(1, 1.0 - (1.0 - p1) * (1.0 - p2)).unwrap();
        assert!(max_abs_diff(m.superop(), expected.superop()) < 1e-14);
    }

    #[test]
    fn tensor_extend_identity() {
        let m = LocalMap::identity(1).tensor_extend(3, &[1]).unwrap();
        assert!(max_abs_diff(m.superop(), &identity(64)) < 1e-15);
        assert!(LocalMap::identity(2).tensor_extend(3, &[0]).is_err());
        assert!(LocalMap::identity(2).tensor_extend(3, &[0, 0]).is_err());
    }

    #[test]
    fn flags_of_standard_maps() {
        let f = LocalMap::cnot().flags();
        assert!(f.cp && f.tp && f.hermiticity_preserving);
        let f = LocalMap::zreset().flags();
        assert!(f.cp && f.tp && f.hermiticity_preserving);
        let mut x = CMat::zeros(2, 2);
        x[(0, 1)] = ONE;
        x[(1, 0)] = ONE;
        let out = LocalMap::zreset().apply(&random_density(&mut rng(3), 2));
        assert!((out[(0, 0)] - ONE).norm() < 1e-14 && out[(1, 1)].norm() < 1e-14);
        assert!(LocalMap::zreset().apply(&x).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn random_cptp_is_cptp() {
        for seed in 0..5 {
            assert!(LocalMap::random_cptp(2, &mut rng(seed)).is_cptp());
            assert!(LocalMap::random_cptp(1, &mut rng(seed)).is_cptp());
        }
    }

    #[test]
    fn presets_resolve() {
        assert_eq!(resolve_preset("identity", 2).unwrap(), LocalMap::identity(2));
        assert_eq!(resolve_preset("cnot", 2).unwrap(), LocalMap::cnot());
        assert!(resolve_preset("noisy_cnot(0.05, 0.001)", 2).unwrap().is_cptp());
        assert_eq!(resolve_preset("random_cptp(4)", 2).unwrap(), resolve_preset("random_cptp(4)", 2).unwrap());
        assert!(resolve_preset("zreset", 2).unwrap().is_cptp());
        assert!(resolve_preset("cnot", 1).is_err());
        assert!(resolve_preset("bogus", 2).is_err());
        assert!(resolve_preset("depolarizing(2)", 1).is_err());
        assert!(resolve_preset("random_unitary(1.5)", 2).is_err());
    }

    #[test]
    fn payload_round_trip() {
        let m = LocalMap::random_cptp(2, &mut rng(9));
        let text = serde_json::to_string(&MapPayload::from_map(&m)).unwrap();
        let back: MapPayload = serde_json::from_str(&text).unwrap();
        assert_eq!(back.resolve(2).unwrap(), m);
        let bad = MapPayload::Matrix { convention: "row-vec".into(), superop: vec![] };
        assert!(bad.resolve(1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn choi_round_trip(seed in any::<u64>(), arity in 1usize..=2) {
            let m = arbitrary_map(arity, seed);
            let back = m.choi().to_map();
            prop_assert!(max_abs_diff(back.superop(), m.superop()) <= 1e-13);
        }

        #[test]
        fn adjoint_is_involution(seed in any::<u64>()) {
            let m = arbitrary_map(2, seed);
            let back = m.adjoint().adjoint();
            prop_assert_eq!(back.superop(), m.superop());
        }

        #[test]
        fn adjoint_identity_for_hermiticity_preserving_maps(seed in any::<u64>()) {
            let mut r = rng(seed);
            let m = LocalMap::random_cptp(2, &mut r)
                .linear_combination(c(1.3, 0.0), &LocalMap::random_unitary(2, &mut r), c(-0.4, 0.0))
                .unwrap();
            let a = ginibre(&mut r, 4, 4);
            let b = ginibre(&mut r, 4, 4);
            let lhs = trace(&(m.apply(&a) * &b));
            let rhs = trace(&(&a * m.adjoint().apply(&b)));
            prop_assert!((lhs - rhs).norm() <= 1e-12);
        }

        #[test]
        fn dual_identity_for_arbitrary_maps(seed in any::<u64>()) {
            let mut r = rng(seed);
            let m = arbitrary_map(2, seed ^ 0x55);
            let a = ginibre(&mut r, 4, 4);
            let b = ginibre(&mut r, 4, 4);
            let lhs = trace(&(m.apply(&a) * &b));
            let rhs = trace(&(&a * m.dual().apply(&b)));
            prop_assert!((lhs - rhs).norm() <= 1e-11 * (1.0 + lhs.norm()));
        }

        #[test]
        fn tp_maps_preserve_unit_trace(seed in any::<u64>()) {
            let mut r = rng(seed);
            let m = LocalMap::random_cptp(2, &mut r);
            let rho = random_density(&mut r, 4);
            prop_assert!((trace(&m.apply(&rho)) - ONE).norm() <= 1e-12);
        }

        #[test]
        fn composition_of_cp_maps_is_cp(seed in any::<u64>()) {
            let mut r = rng(seed);
            let m = compose(&[LocalMap::random_cptp(2, &mut r), LocalMap::random_unitary(2, &mut r),
                              LocalMap::random_cptp(2, &mut r)]).unwrap();
            prop_assert!(m.choi().min_eigenvalue() >= -1e-10);
        }
    }
}
