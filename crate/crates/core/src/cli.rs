//! Command-line front end: sampling, estimation, optimisation, ansatz runs
//! and oracle self-checks over the crate's file formats.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::cone::{evaluate_trace, MapCircuit, Topology};
use crate::densesim::{
    build_perturbed_state, dense_map_circuit_oracle, exact_ground_energy, oracle_check, sample_outcomes,
    DensityMatrix, OutcomeBatch, StatePrep, DENSE_MAX_QUBITS, ORACLE_MAX_QUBITS,
};
use crate::linalg::{kron, mat2_to_dyn, CMat, ONE};
use crate::error::{Error, Result};
use crate::estimation::{estimate, estimate_exact, Estimate, EstimateOptions, InputEnsemble};
use crate::pauli::{parse_observable, xx_hamiltonian, Observable, Pauli, PauliString};
use crate::povm::{compute_duals, DualFrame, SingleQubitPovm};
use crate::varopt::{classical_ansatz, initialize, sweep, AnsatzInit, SweepOptions, SweepReport, TrainingData};

#[derive(Debug, Parser)]
#[command(name = "virtmap", version, about = "Estimate and optimise observables through circuits of local maps")]
pub struct Cli {
    /// Seed for sampling and random initialisation.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample SIC-POVM outcomes from a prepared state.
    Sample(SampleArgs),
    /// Estimate observables under maps from one outcome batch.
    Estimate(EstimateArgs),
    /// Coordinate-descent optimisation of a map circuit.
    Optimize(OptimizeArgs),
    /// Optimise a staircase circuit acting on |0…0⟩.
    Ansatz(AnsatzArgs),
    /// Compare the cone engine with dense simulation on random instances.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// State-preparation file.
    #[arg(long, conflicts_with_all = ["mixed", "zero"])]
    pub state: Option<PathBuf>,
    /// Maximally mixed input on --N qubits.
    #[arg(long)]
    pub mixed: bool,
    /// |0…0⟩ input on --N qubits.
    #[arg(long)]
    pub zero: bool,
    #[arg(long = "N")]
    pub num_qubits: Option<usize>,
    /// Number of shots.
    #[arg(long = "S", alias = "shots")]
    pub shots: usize,
    /// Apply the random two-layer perturbation with this mixing weight.
    #[arg(long)]
    pub perturb: Option<f64>,
    /// Seed of the perturbation maps.
    #[arg(long, default_value_t = 0)]
    pub perturb_seed: u64,
    /// POVM file (default: tetrahedral SIC).
    #[arg(long)]
    pub povm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub batch: Option<PathBuf>,
    /// Circuit files, or `identity`.
    #[arg(long = "circuit", required = true, num_args = 1..)]
    pub circuits: Vec<String>,
    /// Observable files, or `identity`.
    #[arg(long = "observable", required = true, num_args = 1..)]
    pub observables: Vec<String>,
    /// Also evaluate the exact-distribution estimate for this state.
    #[arg(long)]
    pub exact_state: Option<PathBuf>,
    #[arg(long)]
    pub povm: Option<PathBuf>,
    /// CSV instead of JSON lines.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub circuit: PathBuf,
    #[arg(long)]
    pub observable: PathBuf,
    /// Training batch.
    #[arg(long, conflicts_with = "exact_state")]
    pub batch: Option<PathBuf>,
    /// Train on the exact state instead of samples.
    #[arg(long)]
    pub exact_state: Option<PathBuf>,
    /// Optimizer configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Held-out batch for the final estimate.
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub povm: Option<PathBuf>,
    /// Where to write the optimised circuit.
    #[arg(long)]
    pub circuit_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Identity,
    RandomUnitary,
}

#[derive(Debug, Args)]
pub struct AnsatzArgs {
    #[arg(long = "N")]
    pub num_qubits: usize,
    #[arg(long = "J", default_value_t = 1.0)]
    pub coupling: f64,
    #[arg(long = "B", default_value_t = 0.95)]
    pub field: f64,
    /// Open instead of periodic boundary conditions.
    #[arg(long)]
    pub open: bool,
    /// Observable file replacing the XX Hamiltonian.
    #[arg(long)]
    pub observable: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, value_enum, default_value_t = InitArg::RandomUnitary)]
    pub init: InitArg,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub circuit_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long = "N", default_value_t = 4)]
    pub num_qubits: usize,
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    /// Also check a circuit file against the dense oracle.
    #[arg(long)]
    pub circuit: Option<PathBuf>,
}

/// Optimizer config file: sweep options plus run-level keys.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct OptimizerConfig {
    #[serde(flatten)]
    sweep: SweepOptions,
    init: Option<String>,
    seed: Option<u64>,
    holdout_batch: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        Error::Json(j) => Error::Parse(format!("{}: {j}", path.display())),
        other => other,
    })
}

fn stem(path: &str) -> String {
    Path::new(path).file_stem().map_or_else(|| path.to_string(), |s| s.to_string_lossy().into_owned())
}

fn load_povm(path: Option<&PathBuf>) -> Result<SingleQubitPovm> {
    match path {
        Some(p) => with_path(p, SingleQubitPovm::from_json(&read(p)?)),
        None => Ok(SingleQubitPovm::sic()),
    }
}

fn load_batch(path: &Path) -> Result<OutcomeBatch> {
    with_path(path, OutcomeBatch::from_csv(&read(path)?))
}

fn load_circuit(spec: &str, n: usize) -> Result<MapCircuit> {
    if spec == "identity" {
        return MapCircuit::new(n, Topology::General, Vec::new());
    }
    let path = Path::new(spec);
    let circuit = with_path(path, MapCircuit::from_json(&read(path)?))?;
    if circuit.num_qubits() != n {
        return Err(Error::Dimension(format!("{spec}: circuit has {} qubits, expected {n}", circuit.num_qubits())));
    }
    Ok(circuit)
}

fn load_observable(spec: &str, n: usize) -> Result<Observable> {
    if spec == "identity" {
        return Ok(Observable::identity(n));
    }
    let path = Path::new(spec);
    let obs = with_path(path, parse_observable(&read(path)?))?;
    if obs.num_qubits() != n {
        return Err(Error::Dimension(format!("{spec}: observable has {} qubits, expected {n}", obs.num_qubits())));
    }
    Ok(obs)
}

fn load_state(path: &Path) -> Result<DensityMatrix> {
    with_path(path, StatePrep::parse(&read(path)?))?.prepare()
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(Error::Io),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn duals_for(povm: &SingleQubitPovm, n: usize, batch: Option<&OutcomeBatch>) -> Result<Vec<DualFrame>> {
    if let Some(b) = batch {
        if b.povm_labels().iter().any(|l| l != povm.label()) {
            return Err(Error::Invalid(format!(
                "batch was sampled with POVM {:?} but {:?} was supplied",
                b.povm_labels()[0],
                povm.label()
            )));
        }
    }
    Ok(vec![compute_duals(povm)?; n])
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            i32::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::Invalid("--threads must be positive".into()));
        }
        // A pool may already exist when run repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let out = cli.out.as_ref();
    match &cli.command {
        Command::Sample(a) => cmd_sample(a, cli.seed, out),
        Command::Estimate(a) => cmd_estimate(a, out),
        Command::Optimize(a) => cmd_optimize(a, cli.seed, out),
        Command::Ansatz(a) => cmd_ansatz(a, cli.seed, out),
        Command::OracleCheck(a) => cmd_oracle_check(a, cli.seed, out),
    }
}

fn cmd_sample(a: &SampleArgs, seed: u64, out: Option<&PathBuf>) -> Result<()> {
    let (rho, source) = match (&a.state, a.mixed, a.zero) {
        (Some(p), _, _) => (load_state(p)?, p.display().to_string()),
        (None, true, false) | (None, false, true) => {
            let n = a.num_qubits.ok_or_else(|| Error::Invalid("--mixed/--zero need --N".into()))?;
            if n == 0 || n > DENSE_MAX_QUBITS {
                return Err(Error::Invalid(format!("--N must be in 1..={DENSE_MAX_QUBITS}")));
            }
            if a.mixed {
                (DensityMatrix::maximally_mixed(n), "mixed".to_string())
            } else {
                (DensityMatrix::zero_state(n), "zero".to_string())
            }
        }
        _ => return Err(Error::Invalid("give exactly one of --state, --mixed, --zero".into())),
    };
    let (rho, source) = match a.perturb {
        Some(p) => (build_perturbed_state(&rho, p, a.perturb_seed)?, format!("{source} perturb={p} perturb_seed={}", a.perturb_seed)),
        None => (rho, source),
    };
    let povm = load_povm(a.povm.as_ref())?;
    let povms = vec![povm; rho.num_qubits()];
    let batch = sample_outcomes(&rho, &povms, a.shots, seed)?;
    let batch = OutcomeBatch::new(batch.num_qubits(), batch.outcomes().to_vec(), batch.povm_labels().to_vec(), seed, source)?;
    emit(out, &batch.to_csv())
}

fn cmd_estimate(a: &EstimateArgs, out: Option<&PathBuf>) -> Result<()> {
    let batch = a.batch.as_deref().map(load_batch).transpose()?;
    let exact_state = a.exact_state.as_deref().map(load_state).transpose()?;
    let n = match (&batch, &exact_state) {
        (Some(b), _) => b.num_qubits(),
        (None, Some(r)) => r.num_qubits(),
        (None, None) => return Err(Error::Invalid("estimate needs --batch and/or --exact-state".into())),
    };
    if let (Some(b), Some(r)) = (&batch, &exact_state) {
        if b.num_qubits() != r.num_qubits() {
            return Err(Error::Dimension("batch and exact state sizes differ".into()));
        }
    }
    let povm = load_povm(a.povm.as_ref())?;
    let duals = duals_for(&povm, n, batch.as_ref())?;
    let povms = vec![povm; n];
    let mut text = if a.csv { String::from("observable,map,value,sigma,exact\n") } else { String::new() };
    for cspec in &a.circuits {
        let circuit = load_circuit(cspec, n)?;
        for ospec in &a.observables {
            let obs = load_observable(ospec, n)?;
            let exact = exact_state.as_ref().map(|r| estimate_exact(r, &povms, &duals, &circuit, &obs)).transpose()?;
            let est: Option<Estimate> = batch
                .as_ref()
                .map(|b| estimate(b, &duals, &circuit, &obs, EstimateOptions::default()))
                .transpose()?;
            let (oid, cid) = (stem(ospec), stem(cspec));
            if a.csv {
                let (v, s) = est.as_ref().map_or((String::new(), String::new()), |e| (e.value.to_string(), e.sigma.to_string()));
                let x = exact.map_or(String::new(), |x| x.to_string());
                text.push_str(&format!("{oid},{cid},{v},{s},{x}\n"));
            } else {
                let mut record = match est {
                    Some(e) => {
                        let e = e.with_labels(&oid, &cid, &batch.as_ref().map_or(String::new(), |b| b.id()));
                        serde_json::from_str::<serde_json::Value>(&e.to_json())?
                    }
                    None => serde_json::json!({ "observable": oid, "circuit": cid }),
                };
                if let Some(x) = exact {
                    record["exact"] = serde_json::json!(x);
                }
                text.push_str(&record.to_string());
                text.push('\n');
            }
        }
    }
    emit(out, &text)
}

fn load_config(path: Option<&PathBuf>) -> Result<OptimizerConfig> {
    match path {
        Some(p) => with_path(p, serde_json::from_str(&read(p)?).map_err(Error::from)),
        None => Ok(OptimizerConfig::default()),
    }
}

fn report_text(report: &SweepReport, reference: Option<f64>, extra: &[String]) -> String {
    let mut text = report.to_csv(reference);
    for line in extra {
        text.push_str(&format!("# {line}\n"));
    }
    text
}

fn write_circuit(path: Option<&PathBuf>, circuit: &MapCircuit) -> Result<()> {
    if let Some(p) = path {
        fs::write(p, circuit.to_json())?;
    }
    Ok(())
}

fn cmd_optimize(a: &OptimizeArgs, seed: u64, out: Option<&PathBuf>) -> Result<()> {
    let config = load_config(a.config.as_ref())?;
    let mut opts = config.sweep.clone();
    if let Some(r) = a.rounds {
        opts.rounds = r;
    }
    let povm = load_povm(a.povm.as_ref())?;
    let (data, n, batch) = match (&a.batch, &a.exact_state) {
        (Some(p), None) => {
            let batch = load_batch(p)?;
            let n = batch.num_qubits();
            let duals = duals_for(&povm, n, Some(&batch))?;
            (TrainingData::Ensemble(InputEnsemble::from_batch(&batch, &duals)?), n, Some(batch))
        }
        (None, Some(p)) => {
            let rho = load_state(p)?;
            let n = rho.num_qubits();
            (TrainingData::State(rho), n, None)
        }
        _ => return Err(Error::Invalid("optimize needs exactly one of --batch, --exact-state".into())),
    };
    let circuit = load_circuit(&a.circuit.to_string_lossy(), n)?;
    let circuit = match parse_init(config.init.as_deref(), None, config.seed.unwrap_or(seed))? {
        Some(init) => initialize(&circuit, init)?,
        None => circuit,
    };
    let obs = load_observable(&a.observable.to_string_lossy(), n)?;
    let (report, optimised) = sweep(&circuit, &data, &obs, &opts)?;
    let mut extra = vec![format!("final_energy={:.12}", report.final_energy())];
    if let Some(b) = &batch {
        extra.push(format!("training_batch={}", b.id()));
    }
    let holdout = a.holdout.clone().or(config.holdout_batch.clone());
    if let Some(p) = holdout {
        let hb = load_batch(&p)?;
        let duals = duals_for(&povm, n, Some(&hb))?;
        let est = estimate(&hb, &duals, &optimised, &obs, EstimateOptions::default())?;
        extra.push(format!("holdout batch={} value={:.12} sigma={:.12}", hb.id(), est.value, est.sigma));
    }
    write_circuit(a.circuit_out.as_ref(), &optimised)?;
    emit(out, &report_text(&report, None, &extra))
}

/// Config `init` wins over the command-line flag; `None` keeps the file's maps.
fn parse_init(config: Option<&str>, flag: Option<InitArg>, seed: u64) -> Result<Option<AnsatzInit>> {
    match (config, flag) {
        (Some("identity"), _) | (None, Some(InitArg::Identity)) => Ok(Some(AnsatzInit::Identity)),
        (Some("random_unitary"), _) | (None, Some(InitArg::RandomUnitary)) => Ok(Some(AnsatzInit::RandomUnitary(seed))),
        (Some("file"), _) | (None, None) => Ok(None),
        (Some(other), _) => Err(Error::Invalid(format!("unknown init {other:?}"))),
    }
}

fn cmd_ansatz(a: &AnsatzArgs, seed: u64, out: Option<&PathBuf>) -> Result<()> {
    let config = load_config(a.config.as_ref())?;
    let mut opts = config.sweep.clone();
    if let Some(r) = a.rounds {
        opts.rounds = r;
    }
    let n = a.num_qubits;
    if n < 2 {
        return Err(Error::Invalid("--N must be at least 2".into()));
    }
    let obs = match &a.observable {
        Some(p) => load_observable(&p.to_string_lossy(), n)?,
        None => xx_hamiltonian(n, a.coupling, a.field, !a.open)?,
    };
    let init = parse_init(config.init.as_deref(), Some(a.init), config.seed.unwrap_or(seed))?
        .unwrap_or(AnsatzInit::Identity);
    let e0 = if n <= DENSE_MAX_QUBITS && obs.is_hermitian() { Some(exact_ground_energy(&obs)?.0) } else { None };
    let (report, circuit) = classical_ansatz(n, &obs, a.layers, init, &opts)?;
    let mut extra = vec![format!("final_energy={:.12}", report.final_energy())];
    if let Some(e) = e0 {
        extra.push(format!("ground_energy={e:.12}"));
    }
    write_circuit(a.circuit_out.as_ref(), &circuit)?;
    emit(out, &report_text(&report, e0, &extra))
}

fn cmd_oracle_check(a: &OracleArgs, seed: u64, out: Option<&PathBuf>) -> Result<()> {
    let report = oracle_check(a.num_qubits, a.instances, seed)?;
    let mut text = format!(
        "N={} instances={} max_relative_error={:.3e} max_forward_backward={:.3e} {}\n",
        report.num_qubits,
        report.instances,
        report.max_relative_error,
        report.max_forward_backward,
        if report.passed(1e-10, 1e-12) { "PASS" } else { "FAIL" }
    );
    let mut ok = report.passed(1e-10, 1e-12);
    if let Some(p) = &a.circuit {
        let circuit = with_path(p, MapCircuit::from_json(&read(p)?))?;
        let n = circuit.num_qubits();
        if n > ORACLE_MAX_QUBITS {
            return Err(Error::Invalid(format!("oracle limited to N ≤ {ORACLE_MAX_QUBITS}")));
        }
        let povm = SingleQubitPovm::sic();
        let duals = compute_duals(&povm)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..a.instances.max(1) {
            let inputs: Vec<_> = (0..n).map(|_| *duals.dual(rng.random_range(0..4))).collect();
            let letters: Vec<Pauli> = (0..n).map(|_| Pauli::ALL[rng.random_range(0..4)]).collect();
            let pauli = PauliString::new(letters)?;
            let cone = evaluate_trace(&circuit, &inputs, &pauli)?;
            let product = inputs.iter().fold(CMat::from_element(1, 1, ONE), |acc, f| kron(&acc, &mat2_to_dyn(f)));
            let dense = (dense_map_circuit_oracle(&circuit, &product)? * pauli.to_matrix()).trace();
            worst = worst.max((cone - dense).norm() / dense.norm().max(1.0));
        }
        let pass = worst <= 1e-10;
        ok &= pass;
        text.push_str(&format!("circuit={} max_relative_error={worst:.3e} {}\n", p.display(), if pass { "PASS" } else { "FAIL" }));
    }
    emit(out, &text)?;
    if ok {
        Ok(())
    } else {
        Err(Error::NotConverged("oracle check failed".into()))
    }
}
