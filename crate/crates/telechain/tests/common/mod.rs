//! Independent oracles shared by the integration tests and the acceptance run.
//!
//! Reference projectors come from the closed-form 2×2 eigendecomposition and
//! reference branches from running both engines side by side, never from the
//! code under test alone.

#![allow(dead_code)]

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use telechain::gate::{Gate, GateKind};
use telechain::observable::{involutory_part, Observable};
use telechain::pauli::{Pauli, PauliString};
use telechain::product::{ProductState, SiteLabel};
use telechain::stabilizer::Tableau;
use telechain::statevector::{MeasureMode, StateVector};
use telechain::Error;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    }};
}

const LABELS: [SiteLabel; 6] =
    [SiteLabel::Zero, SiteLabel::One, SiteLabel::Plus, SiteLabel::Minus, SiteLabel::YPlus, SiteLabel::YMinus];
const KINDS: [GateKind; 11] = [
    GateKind::H,
    GateKind::S,
    GateKind::Sdg,
    GateKind::X,
    GateKind::Y,
    GateKind::Z,
    GateKind::Cz,
    GateKind::Cnot,
    GateKind::Swap,
    GateKind::Bell,
    GateKind::BellDg,
];

enum Step {
    Gate(Gate),
    Measure(PauliString),
}

struct Case {
    labels: Vec<SiteLabel>,
    steps: Vec<Step>,
    measurements: usize,
}

fn random_gate(rng: &mut ChaCha8Rng, n: usize) -> Gate {
    loop {
        let kind = KINDS[rng.random_range(0..KINDS.len())];
        if kind.arity() > n {
            continue;
        }
        let a = rng.random_range(1..=n);
        let sites = if kind.arity() == 1 {
            vec![a]
        } else {
            let mut b = rng.random_range(1..=n);
            while b == a {
                b = rng.random_range(1..=n);
            }
            vec![a, b]
        };
        return Gate::new(kind, sites).unwrap();
    }
}

fn random_pauli(rng: &mut ChaCha8Rng, n: usize) -> PauliString {
    loop {
        let mut p = PauliString::identity(n);
        let weight = rng.random_range(1..=n.min(3));
        for _ in 0..weight {
            let site = rng.random_range(1..=n);
            p.set(site, [Pauli::X, Pauli::Y, Pauli::Z][rng.random_range(0..3)]);
        }
        if !p.is_identity() {
            if rng.random_bool(0.25) {
                p.negate();
            }
            return p;
        }
    }
}

fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=6);
    let labels = (0..n).map(|_| LABELS[rng.random_range(0..6)]).collect();
    let measurements = rng.random_range(1..=4);
    let mut steps = Vec::new();
    for _ in 0..measurements {
        for _ in 0..rng.random_range(0..=6) {
            steps.push(Step::Gate(random_gate(&mut rng, n)));
        }
        steps.push(Step::Measure(random_pauli(&mut rng, n)));
    }
    for _ in 0..rng.random_range(0..=3) {
        steps.push(Step::Gate(random_gate(&mut rng, n)));
    }
    Case { labels, steps, measurements }
}

enum Branch {
    Impossible,
    Reached { sv: StateVector, tab: Tableau, probs: Vec<(f64, f64)> },
}

fn run_branch(case: &Case, bits: u32) -> Result<Branch, String> {
    let mut sv = StateVector::init_product_state(&ProductState::new(case.labels.clone()).unwrap(), &[]).unwrap();
    let mut tab = Tableau::from_product(&case.labels).unwrap();
    let mut probs = Vec::new();
    let mut m = 0;
    for step in &case.steps {
        match step {
            Step::Gate(g) => {
                sv.apply_gate(g).unwrap();
                tab.apply_gate(g).unwrap();
            }
            Step::Measure(p) => {
                let id = format!("m{m}");
                let outcome = ((bits >> m) & 1) as u8;
                m += 1;
                let obs = Observable::Pauli(p.clone());
                let p_sv = sv.probability_zero(&obs).unwrap();
                let p_sv = if outcome == 0 { p_sv } else { 1.0 - p_sv };
                let a = sv.measure(&id, &obs, MeasureMode::Forced(outcome));
                let b = tab.measure_pauli(&id, p, MeasureMode::Forced(outcome));
                match (a, b) {
                    (Ok((_, pa)), Ok(tb)) => {
                        let pb = if tb.deterministic { 1.0 } else { tb.probability };
                        probs.push((pa, pb));
                    }
                    (Err(Error::ImpossibleOutcome { .. }), Err(Error::ImpossibleOutcome { .. })) => {
                        ensure!(p_sv < 1e-9, "both refused an outcome of probability {p_sv}");
                        return Ok(Branch::Impossible);
                    }
                    (a, b) => {
                        return Err(format!(
                            "engines disagree on outcome {outcome} of {p}: {:?} vs {:?}",
                            a.err(),
                            b.err()
                        ))
                    }
                }
            }
        }
    }
    Ok(Branch::Reached { sv, tab, probs })
}

/// Runs every outcome branch of `cases` seeded programs on both engines;
/// returns the number of reachable branches.
pub fn clifford_equivalence(cases: u64) -> Result<usize, String> {
    let mut branches = 0;
    for seed in 0..cases {
        let case = random_case(seed);
        let mut total = 0.0;
        for bits in 0..(1u32 << case.measurements) {
            if let Branch::Reached { sv, tab, probs } =
                run_branch(&case, bits).map_err(|e| format!("seed {seed}: {e}"))?
            {
                branches += 1;
                let mut weight = 1.0;
                for (a, b) in probs {
                    ensure!([0.0, 0.5, 1.0].iter().any(|x| (a - x).abs() < 1e-9), "seed {seed}: p = {a}");
                    ensure!((a - b).abs() < 1e-9, "seed {seed} branch {bits:b}: {a} vs {b}");
                    weight *= a;
                }
                total += weight;
                let f = tab.fidelity_with(&sv).map_err(|e| e.to_string())?;
                ensure!(f >= 1.0 - 1e-9, "seed {seed} branch {bits:b}: fidelity {f}");
            }
        }
        ensure!((total - 1.0).abs() < 1e-9, "seed {seed}: branch weights sum to {total}");
    }
    Ok(branches)
}

const TOL: f64 = 1e-10;

fn random_hermitian(rng: &mut ChaCha8Rng) -> [C64; 4] {
    loop {
        let a = rng.random_range(-3.0..3.0);
        let d = rng.random_range(-3.0..3.0);
        let b = C64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let disc = ((a - d) * (a - d) / 4.0 + b.norm_sqr()).sqrt();
        if disc > 1e-3 {
            return [C64::new(a, 0.0), b, b.conj(), C64::new(d, 0.0)];
        }
    }
}

/// Projector onto the eigenvector of the larger eigenvalue of `m`.
fn top_projector(m: [C64; 4]) -> [C64; 4] {
    let (a, d, b) = (m[0].re, m[3].re, m[1]);
    let lam = (a + d) / 2.0 + ((a - d) * (a - d) / 4.0 + b.norm_sqr()).sqrt();
    // (m − λ)v = 0 → v ∝ (b, λ − a) or (λ − d, b*) when b ≈ 0.
    let v = if b.norm() > 1e-8 {
        [b, C64::new(lam - a, 0.0)]
    } else if a >= d {
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
    } else {
        [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]
    };
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let v = [v[0] / n, v[1] / n];
    [v[0] * v[0].conj(), v[0] * v[1].conj(), v[1] * v[0].conj(), v[1] * v[1].conj()]
}

fn matmul(a: [C64; 4], b: [C64; 4]) -> [C64; 4] {
    [a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]]
}

/// Applies a single-site operator to `site` (1 = most significant bit).
fn apply(amps: &[C64], n: usize, site: usize, op: [C64; 4]) -> Vec<C64> {
    let bit = 1usize << (n - site);
    let mut out = amps.to_vec();
    for i in 0..amps.len() {
        if i & bit == 0 {
            let (x0, x1) = (amps[i], amps[i | bit]);
            out[i] = op[0] * x0 + op[1] * x1;
            out[i | bit] = op[2] * x0 + op[3] * x1;
        }
    }
    out
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..1 << n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|c| c / norm).collect()
}

/// `Ā² = I` and identical branch statistics for `cases` random Hermitians.
pub fn involutory_suite(cases: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    for case in 0..cases {
        let m = random_hermitian(&mut rng);
        let n = rng.random_range(1..=3);
        let site = rng.random_range(1..=n);
        let bar = involutory_part(site, m).map_err(|e| format!("case {case}: {e}"))?;
        let a = bar.matrix();

        let sq = matmul(a, a);
        for (x, y) in sq.iter().zip([one, zero, zero, one]) {
            ensure!((x - y).norm() < TOL, "case {case}: Ā² = {sq:?}");
        }

        let p_top = top_projector(m);
        let p_bot = [one - p_top[0], -p_top[1], -p_top[2], one - p_top[3]];
        let psi = random_state(&mut rng, n);
        for (outcome, proj) in [(0u8, p_top), (1u8, p_bot)] {
            let reference = apply(&psi, n, site, proj);
            let prob: f64 = reference.iter().map(|c| c.norm_sqr()).sum();
            let mut sv = StateVector::from_amplitudes(psi.clone()).map_err(|e| e.to_string())?;
            match sv.measure_involutory("m", &bar, MeasureMode::Forced(outcome)) {
                Ok((_, p)) => {
                    ensure!((p - prob).abs() < TOL, "case {case} outcome {outcome}: {p} vs {prob}");
                    let post: Vec<C64> = reference.iter().map(|c| c / prob.sqrt()).collect();
                    for (x, y) in sv.amplitudes().iter().zip(&post) {
                        ensure!((x - y).norm() < TOL, "case {case} outcome {outcome}: post-states differ");
                    }
                }
                Err(_) => ensure!(prob < 1e-9, "case {case}: refused outcome with probability {prob}"),
            }
        }
    }
    Ok(())
}
