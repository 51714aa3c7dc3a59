//! End-to-end checks that a protocol teleports: trajectory enumeration or
//! sampling on either backend, Heisenberg tracking for Clifford protocols,
//! feedback ablation, and the measurement-commutation audit.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::gate::Gate;
use crate::observable::Observable;
use crate::pauli::PauliString;
use crate::product::{LogicalInput, SiteLabel};
use crate::protocol::{canonicalize, CanonicalProtocol, Instruction, Protocol, Violation};
use crate::stabilizer::{heisenberg_logical, Axis, Pullback, Tableau};
use crate::statevector::{trajectory_rng, MeasureMode, StateVector, MAX_DENSE_SITES};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_SHOTS: usize = 256;
/// Enumeration visits at most `2^MAX_ENUMERATED_MEASUREMENTS` trajectories.
pub const MAX_ENUMERATED_MEASUREMENTS: usize = 20;
/// Per-input trajectory listings longer than this are summarized.
pub const MAX_LISTED_TRAJECTORIES: usize = 4096;
const SPLIT_BITS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Auto,
    Enumerate,
    Sample { shots: usize, seed: u64 },
    Heisenberg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Auto,
    Statevector,
    Stabilizer,
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub mode: Mode,
    pub backend: Backend,
    pub tolerance: f64,
    /// Shots and seed used when `Auto` falls back to sampling.
    pub shots: usize,
    pub seed: u64,
    pub policy: ExecPolicy,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            mode: Mode::Auto,
            backend: Backend::Auto,
            tolerance: DEFAULT_TOLERANCE,
            shots: DEFAULT_SHOTS,
            seed: 0,
            policy: ExecPolicy::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub outcomes: String,
    pub probability: f64,
    pub fidelity: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InputReport {
    pub input: String,
    pub trajectory_count: usize,
    pub probability_sum: f64,
    pub min_fidelity: f64,
    pub truncated: bool,
    pub trajectories: Vec<TrajectoryRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogicalCheck {
    pub slot: usize,
    pub axis: &'static str,
    /// `P_{i_n} · W† P_{f_n} W` on the default record.
    pub stabilizer: String,
    pub outcome_registers: Vec<String>,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub protocol: String,
    pub mode: String,
    pub backend: String,
    pub tolerance: f64,
    pub shots: Option<usize>,
    pub seed: Option<u64>,
    pub inputs: Vec<InputReport>,
    pub heisenberg: Vec<LogicalCheck>,
    pub min_fidelity: f64,
    pub failures: Vec<String>,
    pub violations: Vec<Violation>,
    pub pass: bool,
}

/// Outcome bits as a string, first measurement first.
pub fn bitstring(bits: &[u8]) -> String {
    bits.iter().map(|b| if *b == 0 { '0' } else { '1' }).collect()
}

fn parse_bits(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(Error::Usage(format!("outcome string {s:?} must contain only 0 and 1"))),
        })
        .collect()
}

enum Op {
    Gate(Gate),
    Measure { id: String, obs: Observable },
    Recover { pauli: PauliString, parity: Vec<usize> },
}

/// Instructions flattened with parity references resolved to outcome indices.
struct Program {
    ops: Vec<Op>,
    num_measurements: usize,
}

impl Program {
    fn new(p: &Protocol) -> Result<Self> {
        let n = p.num_sites;
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut ops = Vec::new();
        for ins in &p.instructions {
            match ins {
                Instruction::Layer { gates, .. } => ops.extend(gates.iter().cloned().map(Op::Gate)),
                Instruction::Measure(m) => {
                    index.insert(&m.id, index.len());
                    ops.push(Op::Measure { id: m.id.clone(), obs: Observable::from_involutory(&m.observable, n) });
                }
                Instruction::Recover(r) => {
                    let parity =
                        r.parity_of
                            .iter()
                            .map(|id| {
                                index.get(id.as_str()).copied().ok_or_else(|| {
                                    Error::Protocol(format!("recovery references unknown measurement {id}"))
                                })
                            })
                            .collect::<Result<_>>()?;
                    ops.push(Op::Recover { pauli: r.pauli.clone(), parity });
                }
            }
        }
        Ok(Program { ops, num_measurements: index.len() })
    }
}

/// State that a trajectory can be run on.
trait Engine: Clone + Send + Sync {
    fn gate(&mut self, g: &Gate) -> Result<()>;
    fn measure(&mut self, id: &str, obs: &Observable, mode: MeasureMode) -> Result<(u8, f64)>;
    fn pauli(&mut self, p: &PauliString) -> Result<()>;
    fn fidelity(&self, site: usize, input: &LogicalInput) -> Result<f64>;
    /// Fidelity of sites `(a, b)` with `(|00⟩ + |11⟩)/√2`.
    fn bell_fidelity(&self, a: usize, b: usize) -> Result<f64>;
}

impl Engine for StateVector {
    fn gate(&mut self, g: &Gate) -> Result<()> {
        self.apply_gate(g)
    }
    fn measure(&mut self, id: &str, obs: &Observable, mode: MeasureMode) -> Result<(u8, f64)> {
        StateVector::measure(self, id, obs, mode)
    }
    fn pauli(&mut self, p: &PauliString) -> Result<()> {
        self.apply_pauli(p)
    }
    fn fidelity(&self, site: usize, input: &LogicalInput) -> Result<f64> {
        Ok(self.logical_tomography(site, input)?.fidelity)
    }
    fn bell_fidelity(&self, a: usize, b: usize) -> Result<f64> {
        let r = C64::new(FRAC_1_SQRT_2, 0.0);
        let z = C64::new(0.0, 0.0);
        self.reduced_fidelity(&[a, b], &[r, z, z, r])
    }
}

impl Engine for Tableau {
    fn gate(&mut self, g: &Gate) -> Result<()> {
        self.apply_gate(g)
    }
    fn measure(&mut self, id: &str, obs: &Observable, mode: MeasureMode) -> Result<(u8, f64)> {
        let p = obs.as_pauli().ok_or_else(|| {
            Error::Unsupported(format!("{id} is not a Pauli measurement; use the statevector backend"))
        })?;
        let r = self.measure_pauli(id, p, mode)?;
        Ok((r.outcome, r.probability))
    }
    fn pauli(&mut self, p: &PauliString) -> Result<()> {
        self.apply_pauli(p);
        Ok(())
    }
    fn fidelity(&self, site: usize, input: &LogicalInput) -> Result<f64> {
        let n = self.num_sites();
        let r = [Axis::X, Axis::Y, Axis::Z].map(|a| self.expectation(&PauliString::single(n, site, a.pauli())).re);
        let t = input.bloch();
        Ok((0.5 * (1.0 + r[0] * t[0] + r[1] * t[1] + r[2] * t[2])).clamp(0.0, 1.0))
    }
    fn bell_fidelity(&self, a: usize, b: usize) -> Result<f64> {
        let n = self.num_sites();
        let pair = |x: Axis| {
            let mut p = PauliString::single(n, a, x.pauli());
            p.mul_right(&PauliString::single(n, b, x.pauli()));
            self.expectation(&p).re
        };
        Ok((0.25 * (1.0 + pair(Axis::X) - pair(Axis::Y) + pair(Axis::Z))).clamp(0.0, 1.0))
    }
}

fn impossible_with_prefix(e: Error, bits: &[u8]) -> Error {
    match e {
        Error::ImpossibleOutcome { id, outcome, probability, .. } => {
            Error::ImpossibleOutcome { id, outcome, probability, prefix: bitstring(bits) }
        }
        other => other,
    }
}

/// Runs ops from `pc` on, branching on every measurement. Outcomes listed in
/// `forced` (by measurement index) are not branched. Leaves are reported in
/// lexicographic outcome order.
/// Called at each complete trajectory with its outcome bits and probability.
type Leaf<'a, E> = dyn FnMut(&[u8], f64, &E) -> Result<()> + 'a;

fn enumerate_from<E: Engine>(
    prog: &Program,
    mut state: E,
    pc: usize,
    bits: &mut Vec<u8>,
    prob: f64,
    forced: &[u8],
    leaf: &mut Leaf<'_, E>,
) -> Result<()> {
    for (off, op) in prog.ops[pc..].iter().enumerate() {
        match op {
            Op::Gate(g) => state.gate(g)?,
            Op::Recover { pauli, parity } => {
                if parity.iter().fold(0u8, |acc, &j| acc ^ bits[j]) == 1 {
                    state.pauli(pauli)?;
                }
            }
            Op::Measure { id, obs } => {
                let choices: &[u8] = match forced.get(bits.len()) {
                    Some(&b) => {
                        if b == 0 {
                            &[0]
                        } else {
                            &[1]
                        }
                    }
                    None => &[0, 1],
                };
                let mut holder = Some(state);
                for (ci, &b) in choices.iter().enumerate() {
                    let mut branch = if ci + 1 == choices.len() {
                        holder.take().expect("last branch takes the state")
                    } else {
                        holder.clone().expect("state present before the last branch")
                    };
                    match branch.measure(id, obs, MeasureMode::Forced(b)) {
                        Ok((_, p)) => {
                            bits.push(b);
                            enumerate_from(prog, branch, pc + off + 1, bits, prob * p, forced, leaf)?;
                            bits.pop();
                        }
                        Err(Error::ImpossibleOutcome { .. }) => {}
                        Err(e) => return Err(impossible_with_prefix(e, bits)),
                    }
                }
                return Ok(());
            }
        }
    }
    leaf(bits, prob, &state)
}

fn run_sampled<E: Engine>(prog: &Program, mut state: E, seed: u64, stream: u64) -> Result<(E, Vec<u8>, f64)> {
    let mut rng = trajectory_rng(seed, stream);
    let mut bits = Vec::with_capacity(prog.num_measurements);
    let mut prob = 1.0;
    for op in &prog.ops {
        match op {
            Op::Gate(g) => state.gate(g)?,
            Op::Recover { pauli, parity } => {
                if parity.iter().fold(0u8, |acc, &j| acc ^ bits[j]) == 1 {
                    state.pauli(pauli)?;
                }
            }
            Op::Measure { id, obs } => {
                let (b, p) = state.measure(id, obs, MeasureMode::sampled(&mut rng))?;
                bits.push(b);
                prob *= p;
            }
        }
    }
    Ok((state, bits, prob))
}

fn run_forced_ops<E: Engine>(prog: &Program, mut state: E, forced: &[u8]) -> Result<(E, f64)> {
    if forced.len() != prog.num_measurements {
        return Err(Error::Usage(format!(
            "{} outcomes given for {} measurements",
            forced.len(),
            prog.num_measurements
        )));
    }
    let mut bits = Vec::with_capacity(forced.len());
    let mut prob = 1.0;
    for op in &prog.ops {
        match op {
            Op::Gate(g) => state.gate(g)?,
            Op::Recover { pauli, parity } => {
                if parity.iter().fold(0u8, |acc, &j| acc ^ bits[j]) == 1 {
                    state.pauli(pauli)?;
                }
            }
            Op::Measure { id, obs } => {
                let b = forced[bits.len()];
                let (_, p) =
                    state.measure(id, obs, MeasureMode::Forced(b)).map_err(|e| impossible_with_prefix(e, &bits))?;
                bits.push(b);
                prob *= p;
            }
        }
    }
    Ok((state, prob))
}

/// A single forced trajectory on the statevector backend.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub state: StateVector,
    pub probability: f64,
    pub fidelities: Vec<f64>,
}

pub fn run_trajectory(p: &Protocol, inputs: &[LogicalInput], outcomes: &str) -> Result<Trajectory> {
    let prog = Program::new(p)?;
    let sv = StateVector::init_product_state(&p.initial, inputs)?;
    let (state, probability) = run_forced_ops(&prog, sv, &parse_bits(outcomes)?)?;
    let fidelities =
        p.logical_out.iter().zip(inputs).map(|(&f, inp)| Engine::fidelity(&state, f, inp)).collect::<Result<_>>()?;
    Ok(Trajectory { state, probability, fidelities })
}

/// One preparation of the logical inputs.
#[derive(Clone)]
struct InputCase {
    label: String,
    inputs: Vec<LogicalInput>,
    bell: bool,
}

const BATTERY_NAMES: [&str; 4] = ["0", "1", "+", "y+"];

/// Input battery rotated across slots, plus a Bell pair on slots 1, 2 when `k ≥ 2`.
fn input_cases(k: usize) -> Vec<InputCase> {
    let battery = LogicalInput::battery();
    let mut cases: Vec<InputCase> = (0..4)
        .map(|b| {
            let idx: Vec<usize> = (0..k).map(|n| (b + n) % 4).collect();
            InputCase {
                label: idx
                    .iter()
                    .enumerate()
                    .map(|(n, &i)| format!("slot{}={}", n + 1, BATTERY_NAMES[i]))
                    .collect::<Vec<_>>()
                    .join(","),
                inputs: idx.iter().map(|&i| battery[i]).collect(),
                bell: false,
            }
        })
        .collect();
    if k >= 2 {
        let mut label = "bell(slot1,slot2)".to_string();
        for n in 3..=k {
            label.push_str(&format!(",slot{n}=0"));
        }
        cases.push(InputCase { label, inputs: vec![battery[0]; k], bell: true });
    }
    cases
}

fn final_fidelities<E: Engine>(p: &Protocol, case: &InputCase, state: &E) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut start = 0;
    if case.bell {
        out.push(state.bell_fidelity(p.logical_out[0], p.logical_out[1])?);
        start = 2;
    }
    for n in start..p.k() {
        out.push(state.fidelity(p.logical_out[n], &case.inputs[n])?);
    }
    Ok(out)
}

fn prepare<E: Engine>(p: &Protocol, case: &InputCase, make: &dyn Fn(&InputCase) -> Result<E>) -> Result<E> {
    let mut s = make(case)?;
    if case.bell {
        s.gate(&Gate::bell(p.logical_in[0], p.logical_in[1]))?;
    }
    Ok(s)
}

fn make_statevector(p: &Protocol) -> impl Fn(&InputCase) -> Result<StateVector> + '_ {
    move |case| StateVector::init_product_state(&p.initial, &case.inputs)
}

fn make_tableau(p: &Protocol) -> impl Fn(&InputCase) -> Result<Tableau> + '_ {
    move |case| {
        let labels: Vec<SiteLabel> = p
            .initial
            .labels()
            .iter()
            .map(|l| match l {
                SiteLabel::Logical(n) => case.inputs[n - 1]
                    .as_label()
                    .ok_or_else(|| Error::Unsupported("non-stabilizer logical input on the stabilizer backend".into())),
                other => Ok(*other),
            })
            .collect::<Result<_>>()?;
        Tableau::from_product(&labels)
    }
}

type CaseRecords = Vec<(usize, Vec<TrajectoryRecord>)>;

fn schrodinger<E: Engine>(
    p: &Protocol,
    prog: &Program,
    cases: &[InputCase],
    mode: Mode,
    policy: ExecPolicy,
    make: &(dyn Fn(&InputCase) -> Result<E> + Sync),
) -> Result<CaseRecords> {
    match mode {
        Mode::Enumerate => {
            let split = prog.num_measurements.min(SPLIT_BITS);
            let items: Vec<(usize, Vec<u8>)> = (0..cases.len())
                .flat_map(|c| {
                    (0..1usize << split)
                        .map(move |x| (c, (0..split).map(|q| ((x >> (split - 1 - q)) & 1) as u8).collect()))
                })
                .collect();
            let results = policy.map(items, |(c, prefix)| -> Result<(usize, Vec<TrajectoryRecord>)> {
                let state = prepare(p, &cases[c], make)?;
                let mut recs = Vec::new();
                let mut bits = Vec::new();
                enumerate_from(prog, state, 0, &mut bits, 1.0, &prefix, &mut |b, pr, s| {
                    recs.push(TrajectoryRecord {
                        outcomes: bitstring(b),
                        probability: pr,
                        fidelity: final_fidelities(p, &cases[c], s)?,
                    });
                    Ok(())
                })?;
                Ok((c, recs))
            });
            results.into_iter().collect()
        }
        Mode::Sample { shots, seed } => {
            let items: Vec<(usize, usize)> = (0..cases.len()).flat_map(|c| (0..shots).map(move |s| (c, s))).collect();
            let results = policy.map(items, |(c, shot)| -> Result<(usize, Vec<TrajectoryRecord>)> {
                let state = prepare(p, &cases[c], make)?;
                let (s, bits, pr) = run_sampled(prog, state, seed, ((c as u64) << 32) | shot as u64)?;
                Ok((
                    c,
                    vec![TrajectoryRecord {
                        outcomes: bitstring(&bits),
                        probability: pr,
                        fidelity: final_fidelities(p, &cases[c], &s)?,
                    }],
                ))
            });
            results.into_iter().collect()
        }
        _ => unreachable!("Schrödinger runs are enumerate or sample"),
    }
}

fn standard_violations(p: &Protocol) -> (Vec<Violation>, Option<CanonicalProtocol>) {
    let mut v = p.validate_standard();
    match canonicalize(p) {
        Ok(c) => {
            v.extend(commutation_audit(&c));
            (v, Some(c))
        }
        Err(e) => {
            v.push(Violation::new("not-canonicalizable", e.to_string()));
            (v, None)
        }
    }
}

fn resolve_mode(p: &Protocol, opts: &VerifyOptions, c: Option<&CanonicalProtocol>) -> Mode {
    match opts.mode {
        Mode::Auto => {
            let tracked = c.is_some_and(|c| c.is_clifford() && c.pauli_observables().is_some());
            if tracked {
                Mode::Heisenberg
            } else if p.num_measurements() <= MAX_ENUMERATED_MEASUREMENTS {
                Mode::Enumerate
            } else {
                Mode::Sample { shots: opts.shots, seed: opts.seed }
            }
        }
        m => m,
    }
}

fn stabilizer_capable(p: &Protocol) -> bool {
    p.is_clifford() && p.measurements().all(|m| m.observable.is_pauli())
}

/// Verifies state transfer on the input battery (and a Bell spot-check for `k ≥ 2`).
pub fn verify_state_transfer(p: &Protocol, opts: VerifyOptions) -> Result<VerificationReport> {
    p.check_structure()?;
    let (violations, canon) = standard_violations(p);
    let mode = resolve_mode(p, &opts, canon.as_ref());
    if mode == Mode::Heisenberg {
        let c = canon.ok_or_else(|| Error::Unsupported("Heisenberg verification needs a canonical form".into()))?;
        let mut report = heisenberg_verify(&c)?;
        report.tolerance = opts.tolerance;
        report.pass &= violations.is_empty();
        report.violations = violations;
        return Ok(report);
    }
    if mode == Mode::Enumerate && p.num_measurements() > MAX_ENUMERATED_MEASUREMENTS {
        return Err(Error::Usage(format!(
            "{} measurements exceed the enumeration cap of {MAX_ENUMERATED_MEASUREMENTS}; use sample mode",
            p.num_measurements()
        )));
    }
    let backend = match opts.backend {
        Backend::Auto if stabilizer_capable(p) => Backend::Stabilizer,
        Backend::Auto => Backend::Statevector,
        b => b,
    };
    if backend == Backend::Stabilizer && !stabilizer_capable(p) {
        return Err(Error::Unsupported("the stabilizer backend needs Clifford gates and Pauli measurements".into()));
    }
    if backend == Backend::Statevector && p.num_sites > MAX_DENSE_SITES {
        return Err(Error::TooLarge { num_sites: p.num_sites, limit: MAX_DENSE_SITES });
    }
    let prog = Program::new(p)?;
    let cases = input_cases(p.k());
    let records = match backend {
        Backend::Stabilizer => schrodinger(p, &prog, &cases, mode, opts.policy, &make_tableau(p))?,
        _ => schrodinger(p, &prog, &cases, mode, opts.policy, &make_statevector(p))?,
    };
    let mut per_case: Vec<Vec<TrajectoryRecord>> = vec![Vec::new(); cases.len()];
    for (c, recs) in records {
        per_case[c].extend(recs);
    }
    let tol = opts.tolerance;
    let mut inputs = Vec::new();
    let mut failures = Vec::new();
    let mut min_fidelity = f64::INFINITY;
    let mut probabilities_ok = true;
    for (case, recs) in cases.iter().zip(per_case) {
        let min_f = recs.iter().flat_map(|r| r.fidelity.iter().copied()).fold(f64::INFINITY, f64::min);
        let sum: f64 = recs.iter().map(|r| r.probability).sum();
        if mode == Mode::Enumerate && (sum - 1.0).abs() > tol {
            probabilities_ok = false;
            failures.push(format!("input {}: trajectory probabilities sum to {sum}", case.label));
        }
        for r in &recs {
            if let Some((slot, f)) = r.fidelity.iter().enumerate().find(|(_, f)| **f < 1.0 - tol) {
                if failures.len() < 32 {
                    failures.push(format!(
                        "input {} trajectory {}: output {} fidelity {f}",
                        case.label,
                        r.outcomes,
                        slot + 1
                    ));
                }
            }
        }
        min_fidelity = min_fidelity.min(min_f);
        let truncated = recs.len() > MAX_LISTED_TRAJECTORIES;
        inputs.push(InputReport {
            input: case.label.clone(),
            trajectory_count: recs.len(),
            probability_sum: sum,
            min_fidelity: min_f,
            truncated,
            trajectories: if truncated { Vec::new() } else { recs },
        });
    }
    let (mode_name, shots, seed) = match mode {
        Mode::Sample { shots, seed } => ("sample", Some(shots), Some(seed)),
        _ => ("enumerate", None, None),
    };
    let pass = min_fidelity >= 1.0 - tol && probabilities_ok && violations.is_empty();
    Ok(VerificationReport {
        protocol: p.name.clone(),
        mode: mode_name.into(),
        backend: if backend == Backend::Stabilizer { "stabilizer" } else { "statevector" }.into(),
        tolerance: tol,
        shots,
        seed,
        inputs,
        heisenberg: Vec::new(),
        min_fidelity,
        failures,
        violations,
        pass,
    })
}

/// Exact Clifford check: `P_{i_n} · W† P^ν_{f_n} W` must stabilize the initial
/// product state for ν = x, z, and the y case must agree with `S_x S_z`.
pub fn heisenberg_verify(c: &CanonicalProtocol) -> Result<VerificationReport> {
    let n = c.num_sites;
    let mut checks = Vec::new();
    for slot in 1..=c.k() {
        let i = c.logical_in[slot - 1];
        let mut found: BTreeMap<Axis, PauliString> = BTreeMap::new();
        for axis in [Axis::X, Axis::Z, Axis::Y] {
            let mut check = LogicalCheck {
                slot,
                axis: axis.name(),
                stabilizer: String::new(),
                outcome_registers: Vec::new(),
                pass: false,
                detail: String::new(),
            };
            match heisenberg_logical(c, slot, axis)? {
                Pullback::Leaks { measurement, image } => {
                    check.stabilizer = image.to_sparse();
                    check.detail = format!("{measurement} anticommutes with the tracked logical");
                }
                Pullback::Image(d) => {
                    let mut s = PauliString::single(n, i, axis.pauli());
                    s.mul_right(&d.project_default());
                    check.stabilizer = s.to_sparse();
                    check.outcome_registers = d.outcome_z.iter().cloned().collect();
                    check.pass = c.initial.is_stabilizer(&s);
                    if !check.pass {
                        check.detail = "not a stabilizer of the initial state".into();
                    }
                    found.insert(axis, s);
                }
            }
            if axis == Axis::Y && check.pass {
                if let (Some(sx), Some(sz)) = (found.get(&Axis::X), found.get(&Axis::Z)) {
                    let zi = PauliString::single(n, i, axis_z());
                    let mut expect = zi.clone();
                    expect.mul_right(sx);
                    expect.mul_right(&zi);
                    expect.mul_right(sz);
                    if !c.initial.is_stabilizer(&expect) {
                        check.pass = false;
                        check.detail = format!("Z S_x Z S_z = {} is not a stabilizer", expect.to_sparse());
                    }
                }
            }
            checks.push(check);
        }
    }
    let pass = checks.iter().all(|ch| ch.pass);
    let failures = checks
        .iter()
        .filter(|ch| !ch.pass)
        .map(|ch| format!("slot {} axis {}: {}", ch.slot, ch.axis, ch.detail))
        .collect();
    Ok(VerificationReport {
        protocol: c.name.clone(),
        mode: "heisenberg".into(),
        backend: "stabilizer".into(),
        tolerance: 0.0,
        shots: None,
        seed: None,
        inputs: Vec::new(),
        heisenberg: checks,
        min_fidelity: if pass { 1.0 } else { 0.0 },
        failures,
        violations: Vec::new(),
        pass,
    })
}

fn axis_z() -> crate::pauli::Pauli {
    crate::pauli::Pauli::Z
}

/// Pairwise commutation of measured observables, commutation with every
/// output-site Pauli, and no support on the outputs.
pub fn commutation_audit(c: &CanonicalProtocol) -> Vec<Violation> {
    let n = c.num_sites;
    let mut out = Vec::new();
    let mut by_site: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (j, m) in c.measurements.iter().enumerate() {
        for s in m.observable.support() {
            by_site.entry(s).or_default().push(j);
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for list in by_site.values() {
        for (x, &a) in list.iter().enumerate() {
            for &b in &list[x + 1..] {
                if seen.insert((a, b)) && !c.measurements[a].observable.commutes_with(&c.measurements[b].observable) {
                    out.push(Violation::new(
                        "anticommuting-measurements",
                        format!("({}, {})", c.measurements[a].id, c.measurements[b].id),
                    ));
                }
            }
        }
    }
    for m in &c.measurements {
        let support = m.observable.support();
        for &f in &c.logical_out {
            if !support.contains(&f) {
                continue;
            }
            out.push(Violation::new("support-on-output", format!("{} acts on output site {f}", m.id)));
            for a in [Axis::X, Axis::Y, Axis::Z] {
                let pf = Observable::Pauli(PauliString::single(n, f, a.pauli()));
                if !m.observable.commutes_with(&pf) {
                    out.push(Violation::new(
                        "anticommutes-with-output",
                        format!("{} anticommutes with {}{f}", m.id, a.pauli().symbol()),
                    ));
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationResult {
    pub slot: usize,
    pub bloch: [f64; 3],
    /// Trace distance of the outcome-averaged output from `I/2`.
    pub distance: f64,
    pub method: &'static str,
}

/// The outcome-averaged state at every `f_n`, with (`ablate = true`) or
/// without recoveries removed. Every slot receives `input`.
pub fn averaged_output(
    p: &Protocol,
    input: &LogicalInput,
    ablate: bool,
    policy: ExecPolicy,
) -> Result<Vec<AblationResult>> {
    p.check_structure()?;
    let mut q = p.clone();
    if ablate {
        q.instructions.retain(|ins| !matches!(ins, Instruction::Recover(_)));
    }
    if q.num_sites > MAX_DENSE_SITES {
        return Err(Error::TooLarge { num_sites: q.num_sites, limit: MAX_DENSE_SITES });
    }
    let inputs = vec![*input; q.k()];
    let k = q.k();
    let (rhos, method) = if q.num_measurements() <= MAX_ENUMERATED_MEASUREMENTS {
        let prog = Program::new(&q)?;
        let split = prog.num_measurements.min(SPLIT_BITS);
        let items: Vec<Vec<u8>> =
            (0..1usize << split).map(|x| (0..split).map(|b| ((x >> (split - 1 - b)) & 1) as u8).collect()).collect();
        let parts = policy.map(items, |prefix| -> Result<Vec<[C64; 4]>> {
            let sv = StateVector::init_product_state(&q.initial, &inputs)?;
            let mut acc = vec![[C64::new(0.0, 0.0); 4]; k];
            enumerate_from(&prog, sv, 0, &mut Vec::new(), 1.0, &prefix, &mut |_, pr, s| {
                for (n, &f) in q.logical_out.iter().enumerate() {
                    let rho = s.reduced_density(&[f])?;
                    for e in 0..4 {
                        acc[n][e] += rho[e] * pr;
                    }
                }
                Ok(())
            })?;
            Ok(acc)
        });
        let mut total = vec![[C64::new(0.0, 0.0); 4]; k];
        for part in parts {
            for (n, rho) in part?.into_iter().enumerate() {
                for e in 0..4 {
                    total[n][e] += rho[e];
                }
            }
        }
        (total, "enumerate")
    } else {
        // Averaged over outcomes, measurements away from f_n leave its
        // reduced state unchanged (no signalling), so the unmeasured marginal
        // is exact when no recovery remains.
        if !ablate || q.recoveries().next().is_some() {
            return Err(Error::Unsupported(
                "outcome averaging beyond the enumeration cap needs ablated recoveries".into(),
            ));
        }
        let c = canonicalize(&q)?;
        if c.measurements.iter().any(|m| m.observable.support().iter().any(|s| c.logical_out.contains(s))) {
            return Err(Error::Unsupported("a measurement acts on an output site".into()));
        }
        let mut sv = StateVector::init_product_state(&c.initial, &inputs)?;
        sv.apply_circuit(&c.circuit)?;
        let rhos = c
            .logical_out
            .iter()
            .map(|&f| sv.reduced_density(&[f]).map(|r| [r[0], r[1], r[2], r[3]]))
            .collect::<Result<_>>()?;
        (rhos, "marginal")
    };
    Ok(rhos
        .iter()
        .enumerate()
        .map(|(n, rho)| {
            let bloch = [2.0 * rho[1].re, -2.0 * rho[1].im, rho[0].re - rho[3].re];
            let norm = bloch.iter().map(|x| x * x).sum::<f64>().sqrt();
            AblationResult { slot: n + 1, bloch, distance: 0.5 * norm, method }
        })
        .collect())
}

/// Trace distance from `I/2` of each output, averaged over outcomes with all
/// recoveries removed.
pub fn feedback_ablation(p: &Protocol, input: &LogicalInput, policy: ExecPolicy) -> Result<Vec<AblationResult>> {
    if p.recoveries().next().is_none() {
        return Err(Error::Usage("feedback ablation needs at least one recovery".into()));
    }
    averaged_output(p, input, true, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{cluster_x, cluster_y, hypergraph, kfold_cluster, valence_bond};

    fn input(a: f64, b: f64) -> LogicalInput {
        LogicalInput::real(a, b).unwrap()
    }

    fn opts(mode: Mode, backend: Backend) -> VerifyOptions {
        VerifyOptions { mode, backend, ..VerifyOptions::default() }
    }

    #[test]
    fn trajectory_examples() {
        let p = cluster_x(5).unwrap();
        let t = run_trajectory(&p, &[input(1.0, 0.0)], "0000").unwrap();
        assert!((t.fidelities[0] - 1.0).abs() < 1e-12);
        assert!((t.probability - 1.0 / 16.0).abs() < 1e-12);
        let t = run_trajectory(&p, &[input(0.6, 0.8)], "1010").unwrap();
        assert!((t.fidelities[0] - 1.0).abs() < 1e-12);
        let mut bare = p.clone();
        bare.instructions.retain(|i| !matches!(i, Instruction::Recover(_)));
        let t = run_trajectory(&bare, &[input(0.6, 0.8)], "0100").unwrap();
        assert!(t.fidelities[0] < 0.99);
        assert!(matches!(run_trajectory(&p, &[input(1.0, 0.0)], "00"), Err(Error::Usage(_))));
    }

    #[test]
    fn impossible_outcome_names_prefix() {
        let mut p = cluster_x(3).unwrap();
        // Measure an eigenstate: site 2 is |+⟩ before any gate acts on it.
        p.instructions
            .insert(0, Instruction::Measure(crate::protocol::Measurement::pauli("m0", 2, crate::pauli::Pauli::X)));
        let err = run_trajectory(&p, &[input(1.0, 0.0)], "100").unwrap_err();
        assert!(matches!(err, Error::ImpossibleOutcome { ref prefix, .. } if prefix.is_empty()), "{err}");
    }

    #[test]
    fn cluster_enumeration_both_backends() {
        let p = cluster_x(5).unwrap();
        for backend in [Backend::Statevector, Backend::Stabilizer] {
            let r = verify_state_transfer(&p, opts(Mode::Enumerate, backend)).unwrap();
            assert!(r.pass, "{r:#?}");
            assert_eq!(r.inputs.len(), 4);
            for inp in &r.inputs {
                assert_eq!(inp.trajectory_count, 16);
                for t in &inp.trajectories {
                    assert!((t.probability - 1.0 / 16.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = cluster_y(2).unwrap();
        let o = opts(Mode::Sample { shots: 16, seed: 7 }, Backend::Statevector);
        let a = verify_state_transfer(&p, o).unwrap();
        let b = verify_state_transfer(&p, VerifyOptions { policy: ExecPolicy::Sequential, ..o }).unwrap();
        assert_eq!(a, b);
        assert!(a.pass);
    }

    #[test]
    fn heisenberg_names_broken_axis() {
        let c = canonicalize(&cluster_x(5).unwrap()).unwrap();
        assert!(heisenberg_verify(&c).unwrap().pass);
        let mut p = cluster_x(5).unwrap();
        for ins in p.instructions.iter_mut() {
            if let Instruction::Recover(r) = ins {
                if r.pauli.get(5) == crate::pauli::Pauli::X {
                    r.parity_of.push("m1".into());
                }
            }
        }
        let r = heisenberg_verify(&canonicalize(&p).unwrap()).unwrap();
        assert!(!r.pass);
        let bad: Vec<&str> = r.heisenberg.iter().filter(|c| !c.pass).map(|c| c.axis).collect();
        assert!(bad.contains(&"z") && !bad.contains(&"x"), "{bad:?}");
    }

    #[test]
    fn builtins_verify_both_ways() {
        let ps = [
            cluster_x(7).unwrap(),
            cluster_y(2).unwrap(),
            valence_bond(2, 1).unwrap(),
            kfold_cluster(1, 2).unwrap(),
            kfold_cluster(2, 1).unwrap(),
        ];
        for p in &ps {
            let h = verify_state_transfer(p, VerifyOptions::default()).unwrap();
            assert_eq!(h.mode, "heisenberg");
            assert!(h.pass, "{}: {h:#?}", p.name);
            let e = verify_state_transfer(p, opts(Mode::Enumerate, Backend::Statevector)).unwrap();
            assert!(e.pass, "{}: {:?}", p.name, e.failures);
        }
    }

    #[test]
    fn hypergraph_enumerates() {
        let r = verify_state_transfer(&hypergraph(1).unwrap(), VerifyOptions::default()).unwrap();
        assert_eq!((r.mode.as_str(), r.backend.as_str()), ("enumerate", "statevector"));
        assert!(r.pass, "{:?}", r.failures);
    }

    #[test]
    fn identity_wire_is_not_teleportation() {
        let p = Protocol::from_json_str(
            r#"{"name":"wire","num_sites":1,"logical_in":[1],"logical_out":[1],"initial":[{"site":1,"state":"logical:1"}],"instructions":[]}"#,
        )
        .unwrap();
        let r = verify_state_transfer(&p, opts(Mode::Enumerate, Backend::Statevector)).unwrap();
        assert!(!r.pass);
        assert!(r.violations.iter().any(|v| v.code == "not-physical-teleportation"));
        assert_eq!(r.min_fidelity, 1.0);
    }

    #[test]
    fn ablation() {
        let p = cluster_x(5).unwrap();
        let inp = input(0.6, 0.8);
        let a = feedback_ablation(&p, &inp, ExecPolicy::Sequential).unwrap();
        assert!(a[0].distance < 1e-9);
        let kept = averaged_output(&p, &inp, false, ExecPolicy::Sequential).unwrap();
        assert!((kept[0].distance - 0.5).abs() < 1e-9);
    }

    #[test]
    fn audit_flags_pairs_and_outputs() {
        let c = canonicalize(&cluster_x(5).unwrap()).unwrap();
        assert!(commutation_audit(&c).is_empty());
        let mut p = cluster_x(5).unwrap();
        let at = p.instructions.iter().position(|i| matches!(i, Instruction::Recover(_))).unwrap();
        p.instructions.insert(
            at,
            Instruction::Measure(crate::protocol::Measurement::pauli("injected", 2, crate::pauli::Pauli::Z)),
        );
        let v = commutation_audit(&canonicalize(&p).unwrap());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].message, "(m2, injected)");
    }
}
