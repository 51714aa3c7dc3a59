//! Product-state labels for the initial state of a protocol.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::Error;
use crate::pauli::{Pauli, PauliString};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SiteLabel {
    Zero,
    One,
    Plus,
    Minus,
    YPlus,
    YMinus,
    /// Carries logical input `n` (1-based).
    Logical(usize),
}

impl SiteLabel {
    /// The signed single-site Pauli stabilizing this label, if it is a fixed state.
    pub fn stabilizer(self) -> Option<(Pauli, bool)> {
        match self {
            SiteLabel::Zero => Some((Pauli::Z, false)),
            SiteLabel::One => Some((Pauli::Z, true)),
            SiteLabel::Plus => Some((Pauli::X, false)),
            SiteLabel::Minus => Some((Pauli::X, true)),
            SiteLabel::YPlus => Some((Pauli::Y, false)),
            SiteLabel::YMinus => Some((Pauli::Y, true)),
            SiteLabel::Logical(_) => None,
        }
    }

    /// `(⟨0|s⟩, ⟨1|s⟩)`; logical sites use the supplied input.
    pub fn amplitudes(self, logical: &[LogicalInput]) -> (C64, C64) {
        let r = FRAC_1_SQRT_2;
        match self {
            SiteLabel::Zero => (C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
            SiteLabel::One => (C64::new(0.0, 0.0), C64::new(1.0, 0.0)),
            SiteLabel::Plus => (C64::new(r, 0.0), C64::new(r, 0.0)),
            SiteLabel::Minus => (C64::new(r, 0.0), C64::new(-r, 0.0)),
            SiteLabel::YPlus => (C64::new(r, 0.0), C64::new(0.0, r)),
            SiteLabel::YMinus => (C64::new(r, 0.0), C64::new(0.0, -r)),
            SiteLabel::Logical(n) => (logical[n - 1].alpha, logical[n - 1].beta),
        }
    }

    /// Bloch vector of a fixed label.
    pub fn bloch(self) -> Option<[f64; 3]> {
        self.stabilizer().map(|(p, neg)| {
            let s = if neg { -1.0 } else { 1.0 };
            match p {
                Pauli::X => [s, 0.0, 0.0],
                Pauli::Y => [0.0, s, 0.0],
                _ => [0.0, 0.0, s],
            }
        })
    }
}

impl fmt::Display for SiteLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SiteLabel::Zero => f.write_str("0"),
            SiteLabel::One => f.write_str("1"),
            SiteLabel::Plus => f.write_str("+"),
            SiteLabel::Minus => f.write_str("-"),
            SiteLabel::YPlus => f.write_str("y+"),
            SiteLabel::YMinus => f.write_str("y-"),
            SiteLabel::Logical(n) => write!(f, "logical:{n}"),
        }
    }
}

impl FromStr for SiteLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Ok(match s {
            "0" => SiteLabel::Zero,
            "1" => SiteLabel::One,
            "+" => SiteLabel::Plus,
            "-" | "−" => SiteLabel::Minus,
            "y+" => SiteLabel::YPlus,
            "y-" | "y−" => SiteLabel::YMinus,
            _ => match s.strip_prefix("logical:").and_then(|n| n.parse::<usize>().ok()) {
                Some(n) if n >= 1 => SiteLabel::Logical(n),
                _ => return Err(Error::Label(s.to_string())),
            },
        })
    }
}

/// A single-qubit input `α|0⟩ + β|1⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogicalInput {
    pub alpha: C64,
    pub beta: C64,
}

impl LogicalInput {
    pub fn new(alpha: C64, beta: C64) -> Result<Self, Error> {
        let norm = alpha.norm_sqr() + beta.norm_sqr();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Normalization(norm));
        }
        Ok(LogicalInput { alpha, beta })
    }

    pub fn real(alpha: f64, beta: f64) -> Result<Self, Error> {
        Self::new(C64::new(alpha, 0.0), C64::new(beta, 0.0))
    }

    /// `|0⟩, |1⟩, |+⟩, |y+⟩`: a qubit channel fixing all four is the identity.
    pub fn battery() -> [LogicalInput; 4] {
        let r = FRAC_1_SQRT_2;
        let c = |a: f64, b: C64| LogicalInput { alpha: C64::new(a, 0.0), beta: b };
        [c(1.0, C64::new(0.0, 0.0)), c(0.0, C64::new(1.0, 0.0)), c(r, C64::new(r, 0.0)), c(r, C64::new(0.0, r))]
    }

    pub fn bloch(&self) -> [f64; 3] {
        let ab = self.alpha.conj() * self.beta;
        [2.0 * ab.re, 2.0 * ab.im, self.alpha.norm_sqr() - self.beta.norm_sqr()]
    }

    /// Stabilizer label when the input is one of the six axis states.
    pub fn as_label(&self) -> Option<SiteLabel> {
        let b = self.bloch();
        let table = [
            ([0.0, 0.0, 1.0], SiteLabel::Zero),
            ([0.0, 0.0, -1.0], SiteLabel::One),
            ([1.0, 0.0, 0.0], SiteLabel::Plus),
            ([-1.0, 0.0, 0.0], SiteLabel::Minus),
            ([0.0, 1.0, 0.0], SiteLabel::YPlus),
            ([0.0, -1.0, 0.0], SiteLabel::YMinus),
        ];
        table.into_iter().find(|(v, _)| v.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12)).map(|(_, l)| l)
    }
}

impl fmt::Display for LogicalInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = |z: C64| {
            if z.im == 0.0 {
                format!("{:.6}", z.re)
            } else {
                format!("{:.6}{:+.6}i", z.re, z.im)
            }
        };
        write!(f, "({}, {})", c(self.alpha), c(self.beta))
    }
}

/// Declared product state: one label per site (site 1 first).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductState {
    labels: Vec<SiteLabel>,
}

impl ProductState {
    /// Checks that `logical:1..=k` each appear exactly once.
    pub fn new(labels: Vec<SiteLabel>) -> Result<Self, Error> {
        let slots: Vec<usize> =
            labels.iter().filter_map(|l| if let SiteLabel::Logical(n) = l { Some(*n) } else { None }).collect();
        for n in 1..=slots.len() {
            match slots.iter().filter(|&&s| s == n).count() {
                1 => {}
                0 => return Err(Error::LogicalSlots(format!("logical:{n} missing"))),
                _ => return Err(Error::LogicalSlots(format!("logical:{n} appears more than once"))),
            }
        }
        Ok(ProductState { labels })
    }

    pub fn labels(&self) -> &[SiteLabel] {
        &self.labels
    }

    pub fn num_sites(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, site: usize) -> SiteLabel {
        self.labels[site - 1]
    }

    pub fn num_logical(&self) -> usize {
        self.labels.iter().filter(|l| matches!(l, SiteLabel::Logical(_))).count()
    }

    pub fn logical_site(&self, n: usize) -> Option<usize> {
        self.labels.iter().position(|l| *l == SiteLabel::Logical(n)).map(|i| i + 1)
    }

    /// True iff `p` is a product of the declared single-site stabilizers with
    /// matching overall sign. Logical sites admit no factor.
    pub fn is_stabilizer(&self, p: &PauliString) -> bool {
        let mut sign_negative = false;
        for site in p.support() {
            match self.labels[site - 1].stabilizer() {
                Some((q, neg)) if q == p.get(site) => sign_negative ^= neg,
                _ => return false,
            }
        }
        match p.phase().sign() {
            Some(s) => (s < 0) == sign_negative,
            None => false,
        }
    }

    /// Expectation of a Pauli string on the product state with logical sites
    /// replaced by the given inputs.
    pub fn expectation(&self, p: &PauliString, logical: &[LogicalInput]) -> C64 {
        let mut acc = crate::statevector::phase_value(p.phase());
        for site in p.support() {
            let b = match self.labels[site - 1] {
                SiteLabel::Logical(n) => logical[n - 1].bloch(),
                l => l.bloch().expect("fixed label"),
            };
            acc *= match p.get(site) {
                Pauli::X => b[0],
                Pauli::Y => b[1],
                Pauli::Z => b[2],
                Pauli::I => 1.0,
            };
            if acc == C64::new(0.0, 0.0) {
                break;
            }
        }
        acc
    }
}
