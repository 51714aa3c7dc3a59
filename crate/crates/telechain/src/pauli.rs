//! Signed Pauli strings on a 1-indexed qubit chain.
//!
//! A string is stored symplectically (one x and one z bit per site, packed
//! into `u64` words) with an exact phase `i^k`. A site with both bits set
//! carries `Y`, so `(+1, x=1, z=1)` is the Hermitian operator `Y`, not `XZ`.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Mul;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PauliError {
    #[error("invalid Pauli symbol {found:?} at position {position}")]
    Symbol { position: usize, found: char },
    #[error("expected {expected} sites, found {found}")]
    Length { expected: usize, found: usize },
    #[error("dimension mismatch: {left} vs {right} sites")]
    Dimension { left: usize, right: usize },
    #[error("site {site} out of range 1..={num_sites}")]
    Site { site: usize, num_sites: usize },
    #[error("empty Pauli string")]
    Empty,
}

/// Single-site Pauli operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

/// A fourth root of unity `i^k`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn from_exponent(k: i64) -> Self {
        Phase(k.rem_euclid(4) as u8)
    }

    pub fn exponent(self) -> u8 {
        self.0
    }

    pub fn conj(self) -> Self {
        Phase((4 - self.0) % 4)
    }

    pub fn is_real(self) -> bool {
        self.0 % 2 == 0
    }

    /// `Some(±1)` for a real phase.
    pub fn sign(self) -> Option<i8> {
        match self.0 {
            0 => Some(1),
            2 => Some(-1),
            _ => None,
        }
    }

    pub fn prefix(self) -> &'static str {
        ["+", "+i", "-", "-i"][self.0 as usize]
    }
}

impl Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

fn words_for(n: usize) -> usize {
    n.div_ceil(64)
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: usize,
    x: Vec<u64>,
    z: Vec<u64>,
    phase: Phase,
}

impl PauliString {
    pub fn identity(num_sites: usize) -> Self {
        let w = words_for(num_sites);
        PauliString { n: num_sites, x: vec![0; w], z: vec![0; w], phase: Phase::ONE }
    }

    /// `p` on `site`, identity elsewhere. Panics if `site` is out of range.
    pub fn single(num_sites: usize, site: usize, p: Pauli) -> Self {
        let mut s = Self::identity(num_sites);
        s.set(site, p);
        s
    }

    /// Builds a string from `(site, Pauli)` pairs; repeated sites multiply.
    pub fn from_sparse(num_sites: usize, factors: &[(usize, Pauli)]) -> Result<Self, PauliError> {
        let mut s = Self::identity(num_sites);
        for &(site, p) in factors {
            if site == 0 || site > num_sites {
                return Err(PauliError::Site { site, num_sites });
            }
            s.mul_right(&Self::single(num_sites, site, p));
        }
        Ok(s)
    }

    pub fn num_sites(&self) -> usize {
        self.n
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }

    pub(crate) fn add_phase(&mut self, k: u8) {
        self.phase = self.phase * Phase(k % 4);
    }

    pub fn negate(&mut self) {
        self.add_phase(2);
    }

    fn index(&self, site: usize) -> (usize, u64) {
        assert!(site >= 1 && site <= self.n, "site {site} out of range 1..={}", self.n);
        ((site - 1) / 64, 1u64 << ((site - 1) % 64))
    }

    pub fn get(&self, site: usize) -> Pauli {
        let (w, m) = self.index(site);
        Pauli::from_bits(self.x[w] & m != 0, self.z[w] & m != 0)
    }

    /// Overwrites the factor on `site` without touching the phase.
    pub fn set(&mut self, site: usize, p: Pauli) {
        let (w, m) = self.index(site);
        let (xb, zb) = p.bits();
        self.x[w] = if xb { self.x[w] | m } else { self.x[w] & !m };
        self.z[w] = if zb { self.z[w] | m } else { self.z[w] & !m };
    }

    pub(crate) fn x_bit(&self, site: usize) -> bool {
        let (w, m) = self.index(site);
        self.x[w] & m != 0
    }

    pub(crate) fn z_bit(&self, site: usize) -> bool {
        let (w, m) = self.index(site);
        self.z[w] & m != 0
    }

    pub(crate) fn set_bits(&mut self, site: usize, xb: bool, zb: bool) {
        self.set(site, Pauli::from_bits(xb, zb));
    }

    pub fn weight(&self) -> usize {
        self.x.iter().zip(&self.z).map(|(a, b)| (a | b).count_ones() as usize).sum()
    }

    pub fn is_identity(&self) -> bool {
        self.x.iter().chain(&self.z).all(|&w| w == 0)
    }

    /// Phase is ±1, so the operator is Hermitian and squares to the identity.
    pub fn is_hermitian(&self) -> bool {
        self.phase.is_real()
    }

    /// Sites carrying a non-identity factor, ascending.
    pub fn support(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (wi, (a, b)) in self.x.iter().zip(&self.z).enumerate() {
            let mut m = a | b;
            while m != 0 {
                let t = m.trailing_zeros() as usize;
                out.push(wi * 64 + t + 1);
                m &= m - 1;
            }
        }
        out
    }

    pub fn min_site(&self) -> Option<usize> {
        for (wi, (a, b)) in self.x.iter().zip(&self.z).enumerate() {
            let m = a | b;
            if m != 0 {
                return Some(wi * 64 + m.trailing_zeros() as usize + 1);
            }
        }
        None
    }

    pub fn max_site(&self) -> Option<usize> {
        for (wi, (a, b)) in self.x.iter().zip(&self.z).enumerate().rev() {
            let m = a | b;
            if m != 0 {
                return Some(wi * 64 + 63 - m.leading_zeros() as usize + 1);
            }
        }
        None
    }

    pub fn overlaps(&self, other: &PauliString) -> bool {
        self.check_dim(other);
        (0..self.x.len()).any(|w| (self.x[w] | self.z[w]) & (other.x[w] | other.z[w]) != 0)
    }

    fn check_dim(&self, other: &PauliString) {
        assert_eq!(self.n, other.n, "Pauli strings of different lengths");
    }

    /// Panicking form of [`commutes`] for internal use on same-size strings.
    pub fn commutes_with(&self, other: &PauliString) -> bool {
        self.check_dim(other);
        let mut parity = 0u32;
        for w in 0..self.x.len() {
            parity ^= ((self.x[w] & other.z[w]) ^ (self.z[w] & other.x[w])).count_ones() & 1;
        }
        parity == 0
    }

    /// `self <- self * rhs` with exact phase.
    pub fn mul_right(&mut self, rhs: &PauliString) {
        self.check_dim(rhs);
        let mut k: i64 = (self.phase.0 + rhs.phase.0) as i64;
        for w in 0..self.x.len() {
            let (x1, z1, x2, z2) = (self.x[w], self.z[w], rhs.x[w], rhs.z[w]);
            let (px, py, pz) = (x1 & !z1, x1 & z1, !x1 & z1);
            let (qx, qy, qz) = (x2 & !z2, x2 & z2, !x2 & z2);
            let plus = (px & qy) | (py & qz) | (pz & qx);
            let minus = (px & qz) | (py & qx) | (pz & qy);
            k += plus.count_ones() as i64 - minus.count_ones() as i64;
            self.x[w] = x1 ^ x2;
            self.z[w] = z1 ^ z2;
        }
        self.phase = Phase::from_exponent(k);
    }

    /// `self <- lhs * self` with exact phase.
    pub fn mul_left(&mut self, lhs: &PauliString) {
        let mut out = lhs.clone();
        out.mul_right(self);
        *self = out;
    }

    pub fn adjoint(&self) -> PauliString {
        let mut out = self.clone();
        out.phase = out.phase.conj();
        out
    }

    /// The Pauli content with phase reset to +1.
    pub fn unsigned(&self) -> PauliString {
        self.clone().with_phase(Phase::ONE)
    }

    /// Compact form such as `-Z2 X3 X5`; the identity prints as `I`.
    pub fn to_sparse(&self) -> String {
        let body: Vec<String> = self.support().into_iter().map(|s| format!("{}{}", self.get(s).symbol(), s)).collect();
        let prefix = match self.phase.0 {
            0 => "",
            p => ["", "i", "-", "-i"][p as usize],
        };
        if body.is_empty() {
            format!("{prefix}I")
        } else if prefix.is_empty() {
            body.join(" ")
        } else {
            format!("{prefix}{}", body.join(" "))
        }
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phase.prefix())?;
        for s in 1..=self.n {
            write!(f, "{}", self.get(s).symbol())?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliString({self})")
    }
}

fn split_prefix(text: &str) -> (Phase, &str) {
    for (pre, ph) in [("+i", Phase::I), ("-i", Phase::MINUS_I), ("+", Phase::ONE), ("-", Phase::MINUS_ONE)] {
        if let Some(rest) = text.strip_prefix(pre) {
            return (ph, rest);
        }
    }
    (Phase::ONE, text)
}

impl FromStr for PauliString {
    type Err = PauliError;

    /// Site count is inferred from the body length.
    fn from_str(text: &str) -> Result<Self, PauliError> {
        let (_, body) = split_prefix(text.trim());
        let n = body.chars().count();
        if n == 0 {
            return Err(PauliError::Empty);
        }
        parse_pauli(text, n)
    }
}

/// Parses `[+|-|+i|-i]` followed by exactly `num_sites` symbols from `IXYZ`.
/// Error positions are 1-based site indices into the body.
pub fn parse_pauli(text: &str, num_sites: usize) -> Result<PauliString, PauliError> {
    let (phase, body) = split_prefix(text.trim());
    let mut s = PauliString::identity(num_sites);
    let mut count = 0;
    for (i, c) in body.chars().enumerate() {
        let p = Pauli::from_symbol(c).ok_or(PauliError::Symbol { position: i + 1, found: c })?;
        count += 1;
        if count <= num_sites {
            s.set(i + 1, p);
        }
    }
    if count != num_sites {
        return Err(PauliError::Length { expected: num_sites, found: count });
    }
    s.phase = phase;
    Ok(s)
}

pub fn pauli_mul(p: &PauliString, q: &PauliString) -> Result<PauliString, PauliError> {
    if p.n != q.n {
        return Err(PauliError::Dimension { left: p.n, right: q.n });
    }
    let mut out = p.clone();
    out.mul_right(q);
    Ok(out)
}

pub fn commutes(p: &PauliString, q: &PauliString) -> Result<bool, PauliError> {
    if p.n != q.n {
        return Err(PauliError::Dimension { left: p.n, right: q.n });
    }
    Ok(p.commutes_with(q))
}

pub fn support(p: &PauliString) -> Vec<usize> {
    p.support()
}

impl Mul for &PauliString {
    type Output = PauliString;
    fn mul(self, rhs: &PauliString) -> PauliString {
        let mut out = self.clone();
        out.mul_right(rhs);
        out
    }
}

/// A physical Pauli string tensored with `Z̃` on named outcome registers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DilatedPauli {
    pub physical: PauliString,
    pub outcome_z: BTreeSet<String>,
}

impl DilatedPauli {
    pub fn new(physical: PauliString) -> Self {
        DilatedPauli { physical, outcome_z: BTreeSet::new() }
    }

    /// Multiplies by `Z̃` on each listed register (symmetric difference, as `Z̃² = 1`).
    pub fn toggle<'a>(&mut self, ids: impl IntoIterator<Item = &'a String>) {
        for id in ids {
            if !self.outcome_z.remove(id) {
                self.outcome_z.insert(id.clone());
            }
        }
    }

    /// Projection onto the all-zero outcome record, where every `Z̃` is `+1`.
    pub fn project_default(&self) -> PauliString {
        self.physical.clone()
    }
}

impl fmt::Display for DilatedPauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.physical.to_sparse())?;
        if !self.outcome_z.is_empty() {
            let ids: Vec<&str> = self.outcome_z.iter().map(String::as_str).collect();
            write!(f, " (x) Z~[{}]", ids.join(","))?;
        }
        Ok(())
    }
}
