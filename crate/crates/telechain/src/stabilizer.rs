//! Stabilizer-tableau backend and Heisenberg tracking of logical operators.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::gate::{Circuit, Gate};
use crate::pauli::{DilatedPauli, Pauli, PauliString, Phase};
use crate::product::{ProductState, SiteLabel};
use crate::protocol::CanonicalProtocol;
use crate::statevector::{MeasureMode, OutcomeRecord, StateVector};

/// Destabilizers in rows `0..n`, stabilizers in rows `n..2n`; every row has phase ±1.
#[derive(Clone, Debug)]
pub struct Tableau {
    n: usize,
    rows: Vec<PauliString>,
    record: Vec<OutcomeRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableauOutcome {
    pub outcome: u8,
    pub deterministic: bool,
    pub probability: f64,
}

impl Tableau {
    /// `|0…0⟩`.
    pub fn zeros(n: usize) -> Self {
        let mut rows = Vec::with_capacity(2 * n);
        for j in 1..=n {
            rows.push(PauliString::single(n, j, Pauli::X));
        }
        for j in 1..=n {
            rows.push(PauliString::single(n, j, Pauli::Z));
        }
        Tableau { n, rows, record: Vec::new() }
    }

    /// Product of fixed labels; logical sites are rejected.
    pub fn from_product(labels: &[SiteLabel]) -> Result<Self> {
        let n = labels.len();
        let mut t = Tableau::zeros(n);
        for (i, l) in labels.iter().enumerate() {
            let (p, neg) = l.stabilizer().ok_or_else(|| {
                Error::Unsupported(format!(
                    "label {l} has no tableau form; logical inputs are tracked in the Heisenberg picture"
                ))
            })?;
            let site = i + 1;
            let (stab, destab) = match p {
                Pauli::Z => (Pauli::Z, Pauli::X),
                Pauli::X => (Pauli::X, Pauli::Z),
                _ => (Pauli::Y, Pauli::Z),
            };
            t.rows[i] = PauliString::single(n, site, destab);
            t.rows[n + i] = PauliString::single(n, site, stab);
            if neg {
                t.rows[n + i].negate();
            }
        }
        Ok(t)
    }

    pub fn num_sites(&self) -> usize {
        self.n
    }

    pub fn stabilizers(&self) -> &[PauliString] {
        &self.rows[self.n..]
    }

    pub fn destabilizers(&self) -> &[PauliString] {
        &self.rows[..self.n]
    }

    pub fn record(&self) -> &[OutcomeRecord] {
        &self.record
    }

    pub fn apply_gate(&mut self, g: &Gate) -> Result<()> {
        g.check_range(self.n)?;
        for r in &mut self.rows {
            g.conjugate_in_place(r)?;
        }
        Ok(())
    }

    pub fn apply_circuit(&mut self, c: &Circuit) -> Result<()> {
        for g in c.gates() {
            self.apply_gate(g)?;
        }
        Ok(())
    }

    /// Applying a Pauli flips the sign of every anticommuting row.
    pub fn apply_pauli(&mut self, p: &PauliString) {
        for r in &mut self.rows {
            if !r.commutes_with(p) {
                r.negate();
            }
        }
    }

    /// `±1` if `p` (up to sign) lies in the stabilizer group.
    fn stabilizer_sign(&self, p: &PauliString) -> Option<i8> {
        let n = self.n;
        if self.rows[n..].iter().any(|s| !s.commutes_with(p)) {
            return None;
        }
        let mut prod = PauliString::identity(n);
        for i in 0..n {
            if !self.rows[i].commutes_with(p) {
                prod.mul_right(&self.rows[n + i]);
            }
        }
        debug_assert_eq!(prod.unsigned(), p.unsigned());
        let rel = Phase::from_exponent(prod.phase().exponent() as i64 - p.phase().exponent() as i64);
        rel.sign()
    }

    /// `⟨p⟩ ∈ {−1, 0, +1}` (times `i` when `p` is anti-Hermitian).
    pub fn expectation(&self, p: &PauliString) -> C64 {
        match self.stabilizer_sign(p) {
            None => C64::new(0.0, 0.0),
            Some(s) => C64::new(s as f64, 0.0),
        }
    }

    /// Measures a Hermitian Pauli string.
    pub fn measure_pauli(&mut self, id: &str, p: &PauliString, mode: MeasureMode) -> Result<TableauOutcome> {
        if !p.is_hermitian() {
            return Err(Error::Usage(format!("measured Pauli {p} is not Hermitian")));
        }
        let n = self.n;
        let pivot = (n..2 * n).find(|&r| !self.rows[r].commutes_with(p));
        let res = match pivot {
            None => {
                let s = self.stabilizer_sign(p).expect("commutes with the whole group");
                let p0 = if s > 0 { 1.0 } else { 0.0 };
                let outcome = mode.choose(p0, id)?;
                TableauOutcome { outcome, deterministic: true, probability: 1.0 }
            }
            Some(q) => {
                let outcome = mode.choose(0.5, id)?;
                let pivot_row = self.rows[q].clone();
                for r in 0..2 * n {
                    if r != q && r != q - n && !self.rows[r].commutes_with(p) {
                        self.rows[r].mul_right(&pivot_row);
                    }
                }
                self.rows[q - n] = pivot_row;
                let mut new = p.clone();
                if outcome == 1 {
                    new.negate();
                }
                self.rows[q] = new;
                TableauOutcome { outcome, deterministic: false, probability: 0.5 }
            }
        };
        self.record.push(OutcomeRecord { id: id.to_string(), outcome: res.outcome, probability: res.probability });
        Ok(res)
    }

    /// `⟨ψ_stab|ψ⟩`-fidelity of a dense state with this stabilizer state.
    pub fn fidelity_with(&self, sv: &StateVector) -> Result<f64> {
        let mut proj = sv.clone();
        for s in self.stabilizers() {
            // φ ← (φ + Sφ)/2
            let mut img = proj.clone();
            img.apply_pauli(s)?;
            let amps: Vec<C64> = proj.amplitudes().iter().zip(img.amplitudes()).map(|(a, b)| (a + b) * 0.5).collect();
            proj = StateVector::from_amplitudes(amps)?;
        }
        Ok(sv.inner(&proj).re)
    }
}

/// True iff `p` is a signed product of the declared single-site stabilizers.
pub fn is_initial_stabilizer(p: &PauliString, initial: &ProductState) -> bool {
    initial.is_stabilizer(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn pauli(self) -> Pauli {
        match self {
            Axis::X => Pauli::X,
            Axis::Y => Pauli::Y,
            Axis::Z => Pauli::Z,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// Outcome of pulling a final-site logical Pauli back to time zero.
#[derive(Clone, Debug, PartialEq)]
pub enum Pullback {
    /// `W† P_f W` on the default record, with its `Z̃` outcome factors.
    Image(DilatedPauli),
    /// The named measurement anticommutes with the tracked operator: the
    /// logical information leaks into the outcome register.
    Leaks { measurement: String, image: PauliString },
}

/// Conjugates `P_{f_n}` backwards through recoveries, measurements and `U`.
pub fn heisenberg_logical(c: &CanonicalProtocol, slot: usize, axis: Axis) -> Result<Pullback> {
    let n = c.num_sites;
    let f = c.logical_out[slot - 1];
    let obs = c.pauli_observables().ok_or_else(|| {
        Error::Unsupported("Heisenberg tracking needs Pauli measurements; use statevector verification".into())
    })?;
    if !c.is_clifford() {
        return Err(Error::Unsupported("non-Clifford circuit; use statevector verification".into()));
    }
    let mut gamma = DilatedPauli::new(PauliString::single(n, f, axis.pauli()));
    for r in c.recoveries.iter().rev() {
        if !r.pauli.commutes_with(&gamma.physical) {
            gamma.toggle(r.parity.iter());
        }
    }
    for (m, a) in c.measurements.iter().zip(&obs).rev() {
        if !a.commutes_with(&gamma.physical) {
            return Ok(Pullback::Leaks { measurement: m.id.clone(), image: gamma.physical });
        }
        if gamma.outcome_z.contains(&m.id) {
            // Z̃_j ↦ Ā_j Z̃_j under the measurement dilation.
            gamma.physical.mul_right(a);
        }
    }
    gamma.physical = c.circuit.heisenberg(&gamma.physical)?;
    Ok(Pullback::Image(gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::canonicalize;

    fn labels(s: &str) -> Vec<SiteLabel> {
        s.split(',').map(|l| l.parse().unwrap()).collect()
    }

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn product_tableaux() {
        let t = Tableau::from_product(&labels("+,+")).unwrap();
        assert_eq!(t.stabilizers(), &[ps("XI"), ps("IX")]);
        let t = Tableau::from_product(&labels("0,1")).unwrap();
        assert_eq!(t.stabilizers(), &[ps("ZI"), ps("-IZ")]);
        let t = Tableau::from_product(&labels("y-")).unwrap();
        assert_eq!(t.stabilizers(), &[ps("-Y")]);
        assert!(Tableau::from_product(&labels("logical:1")).is_err());
    }

    #[test]
    fn measurement_examples() {
        let mut t = Tableau::from_product(&labels("0")).unwrap();
        let r = t.measure_pauli("m", &ps("Z"), MeasureMode::Uniform(0.9)).unwrap();
        assert_eq!((r.outcome, r.deterministic, r.probability), (0, true, 1.0));
        let mut t = Tableau::from_product(&labels("+")).unwrap();
        let r = t.measure_pauli("m", &ps("Z"), MeasureMode::Forced(1)).unwrap();
        assert_eq!((r.outcome, r.deterministic, r.probability), (1, false, 0.5));
        assert_eq!(t.stabilizers(), &[ps("-Z")]);
        assert!(t.measure_pauli("m", &ps("Z"), MeasureMode::Forced(0)).is_err());
        assert_eq!(t.record().len(), 1);
    }

    #[test]
    fn cluster_measurements_match_stabilizer_membership() {
        let mut t = Tableau::from_product(&labels("+,+,+,+,+")).unwrap();
        for j in 1..5 {
            t.apply_gate(&Gate::cz(j, j + 1)).unwrap();
        }
        let a = t.measure_pauli("m2", &ps("IXIII"), MeasureMode::Forced(1)).unwrap();
        let b = t.measure_pauli("m4", &ps("IIIXI"), MeasureMode::Forced(0)).unwrap();
        assert!(!a.deterministic && !b.deterministic);
        // Z1X2X4Z5 commutes with both measurements; Z1Z5 picks up (−1)^{m2+m4}.
        assert_eq!(t.expectation(&ps("ZXIXZ")).re, 1.0);
        assert_eq!(t.expectation(&ps("ZIIIZ")).re, -1.0);
        assert_eq!(t.expectation(&ps("XIIII")).re, 0.0);
    }

    fn cluster5() -> CanonicalProtocol {
        canonicalize(&crate::builtins::cluster_x(5).unwrap()).unwrap()
    }

    #[test]
    fn cluster_logical_images() {
        let c = cluster5();
        let Pullback::Image(x) = heisenberg_logical(&c, 1, Axis::X).unwrap() else { panic!() };
        assert_eq!(x.physical.to_sparse(), "X1 X3 X5");
        assert_eq!(x.outcome_z.iter().cloned().collect::<Vec<_>>(), vec!["m1", "m3"]);
        let Pullback::Image(z) = heisenberg_logical(&c, 1, Axis::Z).unwrap() else { panic!() };
        assert_eq!(z.physical.to_sparse(), "Z1 X2 X4");
        assert_eq!(z.outcome_z.iter().cloned().collect::<Vec<_>>(), vec!["m2", "m4"]);
        let mut s = z.physical.clone();
        s.mul_left(&PauliString::single(5, 1, Pauli::Z));
        assert!(is_initial_stabilizer(&s, &c.initial));
    }

    #[test]
    fn identity_wire() {
        let doc = serde_json::json!({"name":"wire","num_sites":1,"logical_in":[1],"logical_out":[1],
            "initial":[{"site":1,"state":"logical:1"}],"instructions":[]});
        let c = canonicalize(&crate::protocol::parse_protocol(&doc).unwrap()).unwrap();
        let Pullback::Image(x) = heisenberg_logical(&c, 1, Axis::X).unwrap() else { panic!() };
        assert_eq!(x.physical.to_sparse(), "X1");
        assert!(x.outcome_z.is_empty());
    }

    #[test]
    fn initial_stabilizer_examples() {
        let st = ProductState::new(labels("logical:1,+,+,+,+")).unwrap();
        assert!(is_initial_stabilizer(&ps("IXIXI"), &st));
        assert!(!is_initial_stabilizer(&ps("IZIII"), &st));
        assert!(is_initial_stabilizer(&ps("IIIII"), &st));
    }
}
