//! Map circuits and their evaluation by light-cone contraction.
//!
//! A [`MapCircuit`] is an ordered list of local maps. Expectation values of a
//! product input against a product probe, `Tr[Λ(⊗_q ρ_q) ⊗_q P_q]`, are
//! contracted qubit by qubit: a qubit enters the working operator when a map
//! first needs it and leaves (multiplied by its probe and traced) as soon as
//! every map acting on it has been applied. The peak number of simultaneously
//! held qubits is bounded by `max_active`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{absorb_factor, apply_superop_embedded, c, permute_qubits, trace_out_with, CMat, Mat2, C64, ONE};
use crate::maps::{check_positions, LocalMap, MapPayload};
use crate::pauli::{Pauli, PauliString};

/// Circuit layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Disjoint nearest-neighbour pairs, alternating `(0,1),(2,3),…` and
    /// `(1,2),(3,4),…` between layers.
    Brickwork,
    /// Every layer is the chain `(0,1),(1,2),…,(N−2,N−1)` applied in order.
    Staircase,
    /// Arbitrary supports.
    General,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// 1-based layer index.
    pub layer: usize,
    pub qubits: Vec<usize>,
    pub map: LocalMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapCircuit {
    num_qubits: usize,
    topology: Topology,
    components: Vec<Component>,
    max_active: Option<usize>,
}

fn layer_pairs(topology: Topology, n: usize, layer: usize) -> Vec<Vec<usize>> {
    match topology {
        Topology::Brickwork => {
            let start = (layer - 1) % 2;
            (start..n.saturating_sub(1)).step_by(2).map(|i| vec![i, i + 1]).collect()
        }
        _ => (0..n.saturating_sub(1)).map(|i| vec![i, i + 1]).collect(),
    }
}

impl MapCircuit {
    pub fn new(num_qubits: usize, topology: Topology, components: Vec<Component>) -> Result<Self> {
        if num_qubits == 0 {
            return Err(Error::Invalid("circuit needs at least one qubit".into()));
        }
        for (i, comp) in components.iter().enumerate() {
            check_positions(num_qubits, &comp.qubits).map_err(|e| Error::Invalid(format!("component {i}: {e}")))?;
            if comp.map.arity() != comp.qubits.len() {
                return Err(Error::Dimension(format!(
                    "component {i}: map of arity {} on {} qubits",
                    comp.map.arity(),
                    comp.qubits.len()
                )));
            }
            if comp.layer == 0 {
                return Err(Error::Invalid(format!("component {i}: layers are numbered from 1")));
            }
        }
        if topology != Topology::General {
            if components.windows(2).any(|w| w[1].layer < w[0].layer) {
                return Err(Error::Invalid("components must be listed in layer order".into()));
            }
        }
        if topology == Topology::Brickwork {
            let mut seen: Vec<BTreeSet<usize>> = Vec::new();
            for comp in &components {
                if seen.len() < comp.layer {
                    seen.resize(comp.layer, BTreeSet::new());
                }
                for &q in &comp.qubits {
                    if !seen[comp.layer - 1].insert(q) {
                        return Err(Error::Invalid(format!(
                            "brickwork layer {} uses qubit {q} twice",
                            comp.layer
                        )));
                    }
                }
            }
        }
        Ok(Self { num_qubits, topology, components, max_active: None })
    }

    fn layered(topology: Topology, n: usize, layers: usize, maps: Option<Vec<LocalMap>>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Invalid("layered circuits need at least two qubits".into()));
        }
        let slots: Vec<(usize, Vec<usize>)> =
            (1..=layers).flat_map(|l| layer_pairs(topology, n, l).into_iter().map(move |q| (l, q))).collect();
        let maps = match maps {
            Some(m) if m.len() != slots.len() => {
                return Err(Error::Dimension(format!("{} maps for {} circuit slots", m.len(), slots.len())));
            }
            Some(m) => m,
            None => vec![LocalMap::identity(2); slots.len()],
        };
        let components =
            slots.into_iter().zip(maps).map(|((layer, qubits), map)| Component { layer, qubits, map }).collect();
        Self::new(n, topology, components)
    }

    /// Brickwork circuit; `maps` fill the slots layer by layer (identity if `None`).
    pub fn brickwork(n: usize, layers: usize, maps: Option<Vec<LocalMap>>) -> Result<Self> {
        Self::layered(Topology::Brickwork, n, layers, maps)
    }

    /// Staircase circuit; `maps` fill the slots layer by layer (identity if `None`).
    pub fn staircase(n: usize, layers: usize, maps: Option<Vec<LocalMap>>) -> Result<Self> {
        Self::layered(Topology::Staircase, n, layers, maps)
    }

    /// Number of slots in a layered circuit of the given shape.
    pub fn slot_count(topology: Topology, n: usize, layers: usize) -> usize {
        (1..=layers).map(|l| layer_pairs(topology, n, l).len()).sum()
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn num_layers(&self) -> usize {
        self.components.iter().map(|c| c.layer).max().unwrap_or(0)
    }

    pub fn with_max_active(mut self, max_active: Option<usize>) -> Self {
        self.max_active = max_active;
        self
    }

    /// Configured cap, or `layers + 1` for layered topologies and `N` otherwise.
    pub fn max_active(&self) -> usize {
        self.max_active.unwrap_or(match self.topology {
            Topology::General => self.num_qubits,
            _ => (self.num_layers() + 1).min(self.num_qubits).max(1),
        })
    }

    pub fn replace_map(&mut self, index: usize, map: LocalMap) -> Result<()> {
        let comp = self
            .components
            .get_mut(index)
            .ok_or_else(|| Error::Invalid(format!("component index {index} out of range")))?;
        if map.arity() != comp.qubits.len() {
            return Err(Error::Dimension(format!("replacement map has arity {}", map.arity())));
        }
        comp.map = map;
        Ok(())
    }

    /// Inverse circuit: components reversed, each replaced by its inverse.
    pub fn inverse(&self) -> Result<Self> {
        let top = self.num_layers() + 1;
        let components = self
            .components
            .iter()
            .rev()
            .map(|comp| Ok(Component { layer: top - comp.layer, qubits: comp.qubits.clone(), map: comp.map.inverse()? }))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Self::new(self.num_qubits, self.topology, components)?;
        out.max_active = self.max_active;
        Ok(out)
    }

    pub fn is_cptp(&self) -> bool {
        self.components.iter().all(|c| c.map.is_cptp())
    }

    pub fn to_json(&self) -> String {
        let file = CircuitFile {
            num_qubits: self.num_qubits,
            topology: self.topology,
            max_active: self.max_active,
            layers: None,
            maps: None,
            components: Some(
                self.components
                    .iter()
                    .map(|c| ComponentRecord { layer: c.layer, qubits: c.qubits.clone(), map: MapPayload::from_map(&c.map) })
                    .collect(),
            ),
        };
        serde_json::to_string_pretty(&file).expect("circuit serialises")
    }

    /// Either an explicit `components` list, or `layers` plus optional `maps`
    /// filling the slots of a brickwork or staircase layout.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: CircuitFile = serde_json::from_str(text)?;
        let circuit = match (file.components, file.layers) {
            (Some(records), _) => {
                let components = records
                    .into_iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let map = r.map.resolve(r.qubits.len()).map_err(|e| Error::Parse(format!("component {i}: {e}")))?;
                        Ok(Component { layer: r.layer, qubits: r.qubits, map })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::new(file.num_qubits, file.topology, components)?
            }
            (None, Some(layers)) => {
                if file.topology == Topology::General {
                    return Err(Error::Parse("general topology needs an explicit components list".into()));
                }
                let maps = file
                    .maps
                    .map(|ms| {
                        ms.iter()
                            .enumerate()
                            .map(|(i, m)| m.resolve(2).map_err(|e| Error::Parse(format!("map {i}: {e}"))))
                            .collect::<Result<Vec<_>>>()
                    })
                    .transpose()?;
                Self::layered(file.topology, file.num_qubits, layers, maps)?
            }
            (None, None) => return Err(Error::Parse("circuit file needs components or layers".into())),
        };
        Ok(circuit.with_max_active(file.max_active))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ComponentRecord {
    layer: usize,
    qubits: Vec<usize>,
    map: MapPayload,
}

#[derive(Debug, Serialize, Deserialize)]
struct CircuitFile {
    num_qubits: usize,
    topology: Topology,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_active: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    maps: Option<Vec<MapPayload>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    components: Option<Vec<ComponentRecord>>,
}

/// One contraction step. Component indices refer to the circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    AbsorbFactor(usize),
    ApplyMap(usize),
    MultiplyAndTrace(usize),
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::AbsorbFactor(q) => write!(f, "absorb q{q}"),
            Step::ApplyMap(i) => write!(f, "apply c{i}"),
            Step::MultiplyAndTrace(q) => write!(f, "trace q{q}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Trace,
    Keep,
    Skip,
}

/// Ordered contraction steps with the peak number of held qubits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluationSchedule {
    steps: Vec<Step>,
    max_active: usize,
    peak_active: usize,
    kept: Vec<usize>,
}

impl EvaluationSchedule {
    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn max_active(&self) -> usize {
        self.max_active
    }

    pub fn peak_active(&self) -> usize {
        self.peak_active
    }

    /// Qubits left untraced at the end, ascending.
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    /// Validate a hand-written full-trace schedule for `circuit`: each map
    /// applied once after its predecessors with its qubits held, each qubit
    /// absorbed and traced once, traces only after every map on the qubit.
    pub fn from_steps(circuit: &MapCircuit, steps: Vec<Step>, max_active: usize) -> Result<Self> {
        let n = circuit.num_qubits();
        let comps = circuit.components();
        let preds = predecessors(n, &comps.iter().map(|c| c.qubits.clone()).collect::<Vec<_>>());
        let mut applied = vec![false; comps.len()];
        let mut active = BTreeSet::new();
        let mut absorbed = vec![false; n];
        let mut traced = vec![false; n];
        let mut peak = 0;
        for (idx, step) in steps.iter().enumerate() {
            let bad = |msg: String| Error::Invalid(format!("step {idx} ({step}): {msg}"));
            match *step {
                Step::AbsorbFactor(q) => {
                    if q >= n || absorbed[q] {
                        return Err(bad("qubit absent or already absorbed".into()));
                    }
                    absorbed[q] = true;
                    active.insert(q);
                    peak = peak.max(active.len());
                }
                Step::ApplyMap(i) => {
                    let comp = comps.get(i).ok_or_else(|| bad("no such component".into()))?;
                    if applied[i] {
                        return Err(bad("applied twice".into()));
                    }
                    if comp.qubits.iter().any(|q| !active.contains(q)) {
                        return Err(bad("qubits not held".into()));
                    }
                    if preds[i].iter().any(|&p| !applied[p]) {
                        return Err(bad("predecessor not yet applied".into()));
                    }
                    applied[i] = true;
                }
                Step::MultiplyAndTrace(q) => {
                    if q >= n || !active.contains(&q) {
                        return Err(bad("qubit not held".into()));
                    }
                    if comps.iter().enumerate().any(|(i, c)| c.qubits.contains(&q) && !applied[i]) {
                        return Err(bad("maps on this qubit still pending".into()));
                    }
                    active.remove(&q);
                    traced[q] = true;
                }
            }
        }
        if applied.iter().any(|a| !a) || traced.iter().any(|t| !t) {
            return Err(Error::Invalid("schedule leaves maps unapplied or qubits untraced".into()));
        }
        if peak > max_active {
            return Err(Error::Schedule { max_active, best: peak });
        }
        Ok(Self { steps, max_active, peak_active: peak, kept: Vec::new() })
    }
}

impl fmt::Display for EvaluationSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "peak {} / max_active {}", self.peak_active, self.max_active)?;
        for step in &self.steps {
            writeln!(f, "  {step}")?;
        }
        Ok(())
    }
}

/// Direct predecessors: the last earlier component on each shared qubit.
fn predecessors(n: usize, supports: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut last: Vec<Option<usize>> = vec![None; n];
    supports
        .iter()
        .enumerate()
        .map(|(i, qs)| {
            let mut p: Vec<usize> = qs.iter().filter_map(|&q| last[q]).collect();
            p.sort_unstable();
            p.dedup();
            for &q in qs {
                last[q] = Some(i);
            }
            p
        })
        .collect()
}

/// Greedy scheduler over `order` (circuit component indices in application
/// order) with per-qubit roles.
fn plan(n: usize, supports: &[&[usize]], labels: &[usize], roles: &[Role], max_active: usize) -> Result<EvaluationSchedule> {
    let m = supports.len();
    let owned: Vec<Vec<usize>> = supports.iter().map(|s| s.to_vec()).collect();
    let preds = predecessors(n, &owned);
    let mut on_qubit: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, qs) in supports.iter().enumerate() {
        for &q in qs.iter() {
            debug_assert!(roles[q] != Role::Skip);
            on_qubit[q].push(i);
        }
    }
    let mut applied = vec![false; m];
    let mut pending: Vec<usize> = on_qubit.iter().map(Vec::len).collect();
    let mut active: BTreeSet<usize> = BTreeSet::new();
    let mut done = vec![false; n];
    let mut steps = Vec::new();
    let mut peak = 0;

    for q in 0..n {
        if roles[q] == Role::Trace && on_qubit[q].is_empty() {
            steps.push(Step::AbsorbFactor(q));
            steps.push(Step::MultiplyAndTrace(q));
            done[q] = true;
            peak = peak.max(1);
        }
    }
    if peak > max_active {
        return Err(Error::Schedule { max_active, best: peak });
    }

    let mut remaining = m;
    loop {
        if let Some(&q) = active.iter().find(|&&q| roles[q] == Role::Trace && pending[q] == 0) {
            steps.push(Step::MultiplyAndTrace(q));
            active.remove(&q);
            done[q] = true;
            continue;
        }
        if remaining == 0 {
            break;
        }
        let mut best: Option<(usize, usize, Vec<usize>)> = None;
        for q in 0..n {
            if pending[q] == 0 {
                continue;
            }
            let mut cone = BTreeSet::new();
            let mut stack: Vec<usize> = on_qubit[q].iter().copied().filter(|&i| !applied[i]).collect();
            while let Some(i) = stack.pop() {
                if cone.insert(i) {
                    stack.extend(preds[i].iter().copied().filter(|&p| !applied[p]));
                }
            }
            let mut need = active.clone();
            for &i in &cone {
                need.extend(supports[i].iter().copied());
            }
            let cost = need.len();
            if best.as_ref().is_none_or(|(b, _, _)| cost < *b) {
                best = Some((cost, q, cone.into_iter().collect()));
            }
        }
        let (cost, _, cone) = best.expect("pending components imply a candidate");
        if cost > max_active {
            return Err(Error::Schedule { max_active, best: cost });
        }
        let needed: BTreeSet<usize> = cone.iter().flat_map(|&i| supports[i].iter().copied()).collect();
        for q in needed {
            if active.insert(q) {
                steps.push(Step::AbsorbFactor(q));
            }
        }
        peak = peak.max(active.len());
        for i in cone {
            steps.push(Step::ApplyMap(labels[i]));
            applied[i] = true;
            remaining -= 1;
            for &q in supports[i] {
                pending[q] -= 1;
            }
        }
    }
    let kept: Vec<usize> = (0..n).filter(|&q| roles[q] == Role::Keep).collect();
    for &q in &kept {
        if active.insert(q) {
            steps.push(Step::AbsorbFactor(q));
        }
    }
    peak = peak.max(active.len());
    if peak > max_active {
        return Err(Error::Schedule { max_active, best: peak });
    }
    debug_assert!((0..n).all(|q| roles[q] != Role::Trace || done[q]));
    Ok(EvaluationSchedule { steps, max_active, peak_active: peak, kept })
}

/// Greedy full-trace schedule for the circuit (cap from the circuit if `None`).
pub fn schedule(circuit: &MapCircuit, max_active: Option<usize>) -> Result<EvaluationSchedule> {
    let supports: Vec<&[usize]> = circuit.components().iter().map(|c| c.qubits.as_slice()).collect();
    let labels: Vec<usize> = (0..supports.len()).collect();
    let roles = vec![Role::Trace; circuit.num_qubits()];
    plan(circuit.num_qubits(), &supports, &labels, &roles, max_active.unwrap_or_else(|| circuit.max_active()))
}

/// Executes a schedule against a fixed set of superoperators.
#[derive(Debug, Clone)]
struct Pass {
    schedule: EvaluationSchedule,
    /// Indexed by circuit component.
    superops: Vec<CMat>,
    supports: Vec<Vec<usize>>,
}

impl Pass {
    /// `inputs[q]` is absorbed for every held qubit, `probes[q]` multiplies
    /// traced qubits. Returns the operator on the kept qubits (ascending).
    fn run(&self, inputs: &[Mat2], probes: &[Mat2]) -> CMat {
        let mut op = CMat::from_element(1, 1, ONE);
        let mut active: Vec<usize> = Vec::new();
        for step in &self.schedule.steps {
            match *step {
                Step::AbsorbFactor(q) => {
                    let pos = active.partition_point(|&a| a < q);
                    op = absorb_factor(&op, active.len(), pos, &inputs[q]);
                    active.insert(pos, q);
                }
                Step::ApplyMap(i) => {
                    let positions: Vec<usize> = self.supports[i]
                        .iter()
                        .map(|q| active.binary_search(q).expect("scheduled qubit is held"))
                        .collect();
                    op = apply_superop_embedded(&op, active.len(), &positions, &self.superops[i]);
                }
                Step::MultiplyAndTrace(q) => {
                    let pos = active.binary_search(&q).expect("traced qubit is held");
                    op = trace_out_with(&op, active.len(), pos, &probes[q]);
                    active.remove(pos);
                }
            }
        }
        op
    }
}

/// Full-trace evaluator of `Tr[Λ(⊗ ρ_q) ⊗ P_q]` and its backward
/// counterpart `Tr[(⊗ ρ_q) Λᵀ(⊗ P_q)]`, where `Λᵀ` is the bilinear dual.
#[derive(Debug, Clone)]
pub struct ConeEvaluator {
    num_qubits: usize,
    forward: Pass,
    backward: Option<Pass>,
}

impl ConeEvaluator {
    pub fn new(circuit: &MapCircuit, max_active: Option<usize>) -> Result<Self> {
        let cap = max_active.unwrap_or_else(|| circuit.max_active());
        let n = circuit.num_qubits();
        let supports: Vec<Vec<usize>> = circuit.components().iter().map(|c| c.qubits.clone()).collect();
        let forward = Pass {
            schedule: schedule(circuit, Some(cap))?,
            superops: circuit.components().iter().map(|c| c.map.superop().clone()).collect(),
            supports: supports.clone(),
        };
        let rev: Vec<usize> = (0..supports.len()).rev().collect();
        let rev_supports: Vec<&[usize]> = rev.iter().map(|&i| supports[i].as_slice()).collect();
        let backward = plan(n, &rev_supports, &rev, &vec![Role::Trace; n], cap).ok().map(|schedule| Pass {
            schedule,
            superops: circuit.components().iter().map(|c| c.map.dual().superop().clone()).collect(),
            supports: supports.clone(),
        });
        Ok(Self { num_qubits: n, forward, backward })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn schedule(&self) -> &EvaluationSchedule {
        &self.forward.schedule
    }

    /// `Tr[Λ(⊗ inputs) ⊗ probes]`.
    pub fn evaluate(&self, inputs: &[Mat2], probes: &[Mat2]) -> C64 {
        assert_eq!(inputs.len(), self.num_qubits);
        assert_eq!(probes.len(), self.num_qubits);
        self.forward.run(inputs, probes)[(0, 0)]
    }

    /// Same value contracted from the probe side through the dual maps.
    pub fn evaluate_backward(&self, inputs: &[Mat2], probes: &[Mat2]) -> Result<C64> {
        let pass = self
            .backward
            .as_ref()
            .ok_or(Error::Schedule { max_active: self.forward.schedule.max_active, best: self.num_qubits })?;
        Ok(pass.run(probes, inputs)[(0, 0)])
    }
}

/// Run an explicit schedule (see [`EvaluationSchedule::from_steps`]).
pub fn evaluate_with_schedule(circuit: &MapCircuit, schedule: &EvaluationSchedule, inputs: &[Mat2], probes: &[Mat2]) -> C64 {
    let pass = Pass {
        schedule: schedule.clone(),
        superops: circuit.components().iter().map(|c| c.map.superop().clone()).collect(),
        supports: circuit.components().iter().map(|c| c.qubits.clone()).collect(),
    };
    pass.run(inputs, probes)[(0, 0)]
}

/// `Tr[Λ(⊗ D_q) P]` with one factor per qubit.
pub fn evaluate_trace(circuit: &MapCircuit, inputs: &[Mat2], pauli: &PauliString) -> Result<C64> {
    check_lengths(circuit, inputs, pauli)?;
    Ok(ConeEvaluator::new(circuit, None)?.evaluate(inputs, &pauli.factors()))
}

/// [`evaluate_trace`] contracted backwards through the dual maps.
pub fn evaluate_trace_backward(circuit: &MapCircuit, inputs: &[Mat2], pauli: &PauliString) -> Result<C64> {
    check_lengths(circuit, inputs, pauli)?;
    ConeEvaluator::new(circuit, None)?.evaluate_backward(inputs, &pauli.factors())
}

fn check_lengths(circuit: &MapCircuit, inputs: &[Mat2], pauli: &PauliString) -> Result<()> {
    let n = circuit.num_qubits();
    if inputs.len() != n || pauli.num_qubits() != n {
        return Err(Error::Dimension(format!(
            "{} inputs and a {}-qubit Pauli string for a {n}-qubit circuit",
            inputs.len(),
            pauli.num_qubits()
        )));
    }
    Ok(())
}

/// Partition of a circuit around one component `s` into a forward part `F`
/// (applied before `s`) and a backward part `B` (after `s`), with the passes
/// producing the residual operators on the meeting qubits.
#[derive(Debug, Clone)]
pub struct SplitPlan {
    component: usize,
    num_qubits: usize,
    singled: Vec<usize>,
    spectators: Vec<usize>,
    forward_traced: Vec<usize>,
    backward_traced: Vec<usize>,
    /// Meeting qubits ascending, reordered to singled-then-spectators.
    reorder: Vec<usize>,
    forward: Pass,
    backward: Pass,
}

impl SplitPlan {
    /// `max_active` caps the traced part of each pass; the meeting qubits
    /// come on top (default cap: circuit cap plus the arity of `s`).
    pub fn new(circuit: &MapCircuit, s: usize, max_active: Option<usize>) -> Result<Self> {
        let comps = circuit.components();
        let target = comps.get(s).ok_or_else(|| Error::Invalid(format!("component index {s} out of range")))?;
        let n = circuit.num_qubits();
        let supports: Vec<Vec<usize>> = comps.iter().map(|c| c.qubits.clone()).collect();
        let preds = predecessors(n, &supports);

        let mut closure = BTreeSet::new();
        let mut stack = preds[s].clone();
        while let Some(i) = stack.pop() {
            if closure.insert(i) {
                stack.extend(preds[i].iter().copied());
            }
        }
        let mut successors = BTreeSet::new();
        for i in (s + 1)..comps.len() {
            if preds[i].iter().any(|p| *p == s || successors.contains(p)) {
                successors.insert(i);
            }
        }
        let maximal: BTreeSet<usize> = (0..comps.len()).filter(|i| *i != s && !successors.contains(i)).collect();

        let t_s: BTreeSet<usize> = target.qubits.iter().copied().collect();
        let partition = |f: &BTreeSet<usize>| {
            let t_f: BTreeSet<usize> = f.iter().flat_map(|&i| supports[i].iter().copied()).collect();
            let b: Vec<usize> = (0..comps.len()).filter(|i| *i != s && !f.contains(i)).collect();
            let t_b: BTreeSet<usize> = b.iter().flat_map(|&i| supports[i].iter().copied()).collect();
            let meeting: BTreeSet<usize> = t_s.union(&t_f.intersection(&t_b).copied().collect()).copied().collect();
            (t_f, b, t_b, meeting)
        };
        let first = partition(&closure);
        let second = partition(&maximal);
        let (f_set, (t_f, b_list, t_b, meeting)) =
            if second.3.len() < first.3.len() { (maximal, second) } else { (closure, first) };

        let mut roles_f = vec![Role::Skip; n];
        let mut roles_b = vec![Role::Skip; n];
        let mut forward_traced = Vec::new();
        let mut backward_traced = Vec::new();
        for q in 0..n {
            if meeting.contains(&q) {
                roles_f[q] = Role::Keep;
                roles_b[q] = Role::Keep;
            } else if !t_s.contains(&q) && !t_b.contains(&q) {
                roles_f[q] = Role::Trace;
                forward_traced.push(q);
            } else {
                debug_assert!(t_b.contains(&q) && !t_f.contains(&q));
                roles_b[q] = Role::Trace;
                backward_traced.push(q);
            }
        }
        let cap = max_active.unwrap_or_else(|| circuit.max_active()) + target.qubits.len();
        let f_list: Vec<usize> = f_set.iter().copied().collect();
        let f_supports: Vec<&[usize]> = f_list.iter().map(|&i| supports[i].as_slice()).collect();
        let forward = Pass {
            schedule: plan(n, &f_supports, &f_list, &roles_f, cap)?,
            superops: comps.iter().map(|c| c.map.superop().clone()).collect(),
            supports: supports.clone(),
        };
        let b_rev: Vec<usize> = b_list.iter().rev().copied().collect();
        let b_supports: Vec<&[usize]> = b_rev.iter().map(|&i| supports[i].as_slice()).collect();
        let backward = Pass {
            schedule: plan(n, &b_supports, &b_rev, &roles_b, cap)?,
            superops: comps.iter().map(|c| c.map.dual().superop().clone()).collect(),
            supports,
        };
        let _ = t_f;

        let meeting: Vec<usize> = meeting.into_iter().collect();
        let spectators: Vec<usize> = meeting.iter().copied().filter(|q| !t_s.contains(q)).collect();
        let reorder = target
            .qubits
            .iter()
            .chain(spectators.iter())
            .map(|q| meeting.binary_search(q).expect("meeting qubit"))
            .collect();
        Ok(Self {
            component: s,
            num_qubits: n,
            singled: target.qubits.clone(),
            spectators,
            forward_traced,
            backward_traced,
            reorder,
            forward,
            backward,
        })
    }

    pub fn component(&self) -> usize {
        self.component
    }

    /// Qubits of the singled-out component, in its own order.
    pub fn singled(&self) -> &[usize] {
        &self.singled
    }

    /// Meeting qubits outside the singled-out component.
    pub fn spectators(&self) -> &[usize] {
        &self.spectators
    }

    /// Qubits whose input factor enters the forward residual.
    pub fn forward_input_qubits(&self) -> Vec<usize> {
        let mut q: Vec<usize> = self.forward_traced.iter().chain(self.meeting_iter()).copied().collect();
        q.sort_unstable();
        q
    }

    /// Qubits whose probe factor enters the forward residual.
    pub fn forward_probe_qubits(&self) -> &[usize] {
        &self.forward_traced
    }

    /// Qubits whose input factor enters the backward residual.
    pub fn backward_input_qubits(&self) -> &[usize] {
        &self.backward_traced
    }

    /// Qubits whose probe factor enters the backward residual.
    pub fn backward_probe_qubits(&self) -> Vec<usize> {
        let mut q: Vec<usize> = self.backward_traced.iter().chain(self.meeting_iter()).copied().collect();
        q.sort_unstable();
        q
    }

    fn meeting_iter(&self) -> impl Iterator<Item = &usize> {
        self.singled.iter().chain(self.spectators.iter())
    }

    pub fn peak_active(&self) -> usize {
        self.forward.schedule.peak_active.max(self.backward.schedule.peak_active)
    }

    /// `Tr_fwd[(⊗ probes) Λ_F(⊗ inputs)]` on singled ⊗ spectator qubits.
    pub fn forward_residual(&self, inputs: &[Mat2], probes: &[Mat2]) -> CMat {
        let r = self.forward.run(inputs, probes);
        permute_qubits(&r, self.reorder.len(), &self.reorder)
    }

    /// `Tr_bwd[(⊗ inputs) Λ_Bᵀ(⊗ probes)]` on singled ⊗ spectator qubits.
    pub fn backward_residual(&self, inputs: &[Mat2], probes: &[Mat2]) -> CMat {
        let r = self.backward.run(probes, inputs);
        permute_qubits(&r, self.reorder.len(), &self.reorder)
    }

    /// Expand both residuals in the normalised spectator Pauli basis, giving
    /// pairs `(R_a, R̄_a)` with `Tr[(Λ_s ⊗ id)(R) R̄] = Σ_a Tr[Λ_s(R_a) R̄_a]`.
    pub fn decompose(&self, forward: &CMat, backward: &CMat) -> Vec<(CMat, CMat)> {
        let k = self.singled.len();
        let m = self.spectators.len();
        if m == 0 {
            return vec![(forward.clone(), backward.clone())];
        }
        let scale = c(1.0 / (1u64 << m) as f64, 0.0).sqrt();
        let reduce = |op: &CMat, idx: usize| {
            let mut out = op.clone();
            for t in (0..m).rev() {
                let letter = Pauli::ALL[(idx >> (2 * (m - 1 - t))) & 3];
                out = trace_out_with(&out, k + t + 1, k + t, &(letter.matrix() * scale));
            }
            out
        };
        (0..(1usize << (2 * m))).map(|idx| (reduce(forward, idx), reduce(backward, idx))).collect()
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }
}

/// Residual pairs for a single input/Pauli configuration.
pub fn split_evaluate(circuit: &MapCircuit, s: usize, inputs: &[Mat2], pauli: &PauliString) -> Result<Vec<(CMat, CMat)>> {
    check_lengths(circuit, inputs, pauli)?;
    let plan = SplitPlan::new(circuit, s, None)?;
    let probes = pauli.factors();
    let r = plan.forward_residual(inputs, &probes);
    let rb = plan.backward_residual(inputs, &probes);
    Ok(plan.decompose(&r, &rb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dyn_to_mat2, max_abs_diff, random_density};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_circuit(topology: Topology, n: usize, layers: usize, seed: u64) -> MapCircuit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = MapCircuit::slot_count(topology, n, layers);
        let maps = (0..count).map(|_| LocalMap::random_cptp(2, &mut rng)).collect();
        MapCircuit::layered(topology, n, layers, Some(maps)).unwrap()
    }

    fn random_inputs(n: usize, seed: u64) -> Vec<Mat2> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| dyn_to_mat2(&random_density(&mut rng, 2))).collect()
    }

    #[test]
    fn brickwork_layout() {
        let c = MapCircuit::brickwork(5, 2, None).unwrap();
        let supports: Vec<Vec<usize>> = c.components().iter().map(|c| c.qubits.clone()).collect();
        assert_eq!(supports, vec![vec![0, 1], vec![2, 3], vec![1, 2], vec![3, 4]]);
        assert_eq!(c.max_active(), 3);
        assert_eq!(MapCircuit::staircase(4, 1, None).unwrap().components().len(), 3);
    }

    #[test]
    fn brickwork_rejects_overlap() {
        let comps = vec![
            Component { layer: 1, qubits: vec![0, 1], map: LocalMap::identity(2) },
            Component { layer: 1, qubits: vec![1, 2], map: LocalMap::identity(2) },
        ];
        assert!(MapCircuit::new(3, Topology::Brickwork, comps.clone()).is_err());
        assert!(MapCircuit::new(3, Topology::Staircase, comps).is_ok());
    }

    #[test]
    fn schedule_peaks() {
        for n in 2..9 {
            for layers in 1..4 {
                for topo in [Topology::Brickwork, Topology::Staircase] {
                    let c = MapCircuit::layered(topo, n, layers, None).unwrap();
                    let s = schedule(&c, None).unwrap();
                    assert!(s.peak_active() <= c.max_active(), "{topo:?} n={n} layers={layers}");
                    let traces = s.steps().iter().filter(|s| matches!(s, Step::MultiplyAndTrace(_))).count();
                    assert_eq!(traces, n);
                }
            }
        }
    }

    #[test]
    fn infeasible_cap_is_reported() {
        let c = MapCircuit::brickwork(6, 2, None).unwrap();
        match schedule(&c, Some(2)) {
            Err(Error::Schedule { max_active: 2, best }) => assert!(best > 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn forward_matches_backward() {
        for topo in [Topology::Brickwork, Topology::Staircase] {
            let c = random_circuit(topo, 5, 2, 3);
            let ev = ConeEvaluator::new(&c, None).unwrap();
            let inputs = random_inputs(5, 4);
            let probes = "XYZIX".parse::<PauliString>().unwrap().factors();
            let f = ev.evaluate(&inputs, &probes);
            let b = ev.evaluate_backward(&inputs, &probes).unwrap();
            assert!((f - b).norm() < 1e-12);
        }
    }

    #[test]
    fn split_reproduces_full_value() {
        let c = random_circuit(Topology::Staircase, 5, 2, 8);
        let inputs = random_inputs(5, 9);
        let pauli: PauliString = "ZXIYZ".parse().unwrap();
        let full = evaluate_trace(&c, &inputs, &pauli).unwrap();
        for s in 0..c.components().len() {
            let pairs = split_evaluate(&c, s, &inputs, &pauli).unwrap();
            let map = &c.components()[s].map;
            let value: C64 = pairs.iter().map(|(r, rb)| (map.apply(r) * rb).trace()).sum();
            assert!((value - full).norm() < 1e-12, "component {s}");
        }
    }

    #[test]
    fn identity_circuit_reduces_to_product() {
        let c = MapCircuit::brickwork(4, 2, None).unwrap();
        let inputs = random_inputs(4, 1);
        let pauli: PauliString = "XZYI".parse().unwrap();
        let expected: C64 =
            inputs.iter().zip(pauli.factors()).map(|(r, p)| (r * p).trace()).fold(ONE, |a, b| a * b);
        assert!((evaluate_trace(&c, &inputs, &pauli).unwrap() - expected).norm() < 1e-14);
    }

    #[test]
    fn explicit_schedule_validation() {
        let c = random_circuit(Topology::Brickwork, 3, 1, 2);
        let good = vec![
            Step::AbsorbFactor(2),
            Step::MultiplyAndTrace(2),
            Step::AbsorbFactor(1),
            Step::AbsorbFactor(0),
            Step::ApplyMap(0),
            Step::MultiplyAndTrace(1),
            Step::MultiplyAndTrace(0),
        ];
        let sched = EvaluationSchedule::from_steps(&c, good, 3).unwrap();
        let inputs = random_inputs(3, 5);
        let probes = "ZXY".parse::<PauliString>().unwrap().factors();
        let greedy = ConeEvaluator::new(&c, None).unwrap().evaluate(&inputs, &probes);
        assert!((evaluate_with_schedule(&c, &sched, &inputs, &probes) - greedy).norm() < 1e-14);
        let early = vec![Step::AbsorbFactor(0), Step::MultiplyAndTrace(0)];
        assert!(EvaluationSchedule::from_steps(&c, early, 3).is_err());
    }

    #[test]
    fn circuit_json_round_trip() {
        let c = random_circuit(Topology::Brickwork, 4, 2, 6).with_max_active(Some(4));
        let back = MapCircuit::from_json(&c.to_json()).unwrap();
        assert_eq!(back.max_active(), 4);
        for (a, b) in back.components().iter().zip(c.components()) {
            assert_eq!(a.qubits, b.qubits);
            assert!(max_abs_diff(a.map.superop(), b.map.superop()) < 1e-15);
        }
        let layered = MapCircuit::from_json(
            r#"{"num_qubits": 3, "topology": "staircase", "layers": 1, "maps": ["cnot", "identity"]}"#,
        )
        .unwrap();
        assert_eq!(layered.components().len(), 2);
        assert!(MapCircuit::from_json(r#"{"num_qubits": 3, "topology": "general", "layers": 1}"#).is_err());
    }

    #[test]
    fn inverse_circuit_undoes_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let maps = (0..3).map(|_| LocalMap::random_unitary(2, &mut rng)).collect();
        let c = MapCircuit::brickwork(4, 2, Some(maps)).unwrap();
        let inv = c.inverse().unwrap();
        let rho = random_density(&mut rng, 16);
        let fwd = crate::densesim::dense_map_circuit_oracle(&c, &rho).unwrap();
        let back = crate::densesim::dense_map_circuit_oracle(&inv, &fwd).unwrap();
        assert!(max_abs_diff(&back, &rho) < 1e-10);
    }
}
