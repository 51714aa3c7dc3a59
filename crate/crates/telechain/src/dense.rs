//! Small dense operators on a handful of named sites.
//!
//! The first listed site is the most significant bit of the row/column index,
//! matching the statevector's site-1-is-MSB ordering.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::gate::{Gate, GateKind};
use crate::pauli::{Pauli, PauliString};

pub const MAX_DENSE_OPERATOR_SITES: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DenseError {
    #[error("operator on {0} sites exceeds the {MAX_DENSE_OPERATOR_SITES}-site limit")]
    TooManySites(usize),
    #[error("matrix has {found} entries, expected {expected}")]
    Shape { expected: usize, found: usize },
    #[error("site {0} listed twice")]
    RepeatedSite(usize),
    #[error("operator is not unitary (deviation {0:e})")]
    NotUnitary(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    sites: Vec<usize>,
    matrix: Vec<C64>,
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn pauli_matrix(p: Pauli) -> [C64; 4] {
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    match p {
        Pauli::I => [o, z, z, o],
        Pauli::X => [z, o, o, z],
        Pauli::Y => [z, -i, i, z],
        Pauli::Z => [o, z, z, -o],
    }
}

impl DenseOperator {
    pub fn new(sites: Vec<usize>, matrix: Vec<C64>) -> Result<Self, DenseError> {
        if sites.len() > MAX_DENSE_OPERATOR_SITES {
            return Err(DenseError::TooManySites(sites.len()));
        }
        for (i, s) in sites.iter().enumerate() {
            if sites[..i].contains(s) {
                return Err(DenseError::RepeatedSite(*s));
            }
        }
        let d = 1usize << sites.len();
        if matrix.len() != d * d {
            return Err(DenseError::Shape { expected: d * d, found: matrix.len() });
        }
        Ok(DenseOperator { sites, matrix })
    }

    pub fn identity(sites: Vec<usize>) -> Self {
        let d = 1usize << sites.len();
        let mut m = vec![c(0.0, 0.0); d * d];
        for i in 0..d {
            m[i * d + i] = c(1.0, 0.0);
        }
        DenseOperator { sites, matrix: m }
    }

    fn diagonal(sites: Vec<usize>, diag: &[C64]) -> Self {
        let d = diag.len();
        let mut m = vec![c(0.0, 0.0); d * d];
        for (i, v) in diag.iter().enumerate() {
            m[i * d + i] = *v;
        }
        DenseOperator { sites, matrix: m }
    }

    pub fn pauli(site: usize, p: Pauli) -> Self {
        DenseOperator { sites: vec![site], matrix: pauli_matrix(p).to_vec() }
    }

    /// Dense form of a Pauli string restricted to its support.
    pub fn from_pauli_string(p: &PauliString) -> Result<Self, DenseError> {
        let support = p.support();
        if support.len() > MAX_DENSE_OPERATOR_SITES {
            return Err(DenseError::TooManySites(support.len()));
        }
        let mut op = DenseOperator::identity(Vec::new());
        op.matrix[0] = crate::statevector::phase_value(p.phase());
        for s in support {
            op = op.kron(&DenseOperator::pauli(s, p.get(s)));
        }
        Ok(op)
    }

    pub fn from_gate(g: &Gate) -> Self {
        let s = g.sites.clone();
        let (o, i) = (c(1.0, 0.0), c(0.0, 1.0));
        let r = c(FRAC_1_SQRT_2, 0.0);
        match g.kind {
            GateKind::H => DenseOperator { sites: s, matrix: vec![r, r, r, -r] },
            GateKind::S => DenseOperator::diagonal(s, &[o, i]),
            GateKind::Sdg => DenseOperator::diagonal(s, &[o, -i]),
            GateKind::X => DenseOperator { sites: s, matrix: pauli_matrix(Pauli::X).to_vec() },
            GateKind::Y => DenseOperator { sites: s, matrix: pauli_matrix(Pauli::Y).to_vec() },
            GateKind::Z => DenseOperator { sites: s, matrix: pauli_matrix(Pauli::Z).to_vec() },
            GateKind::Cz => DenseOperator::diagonal(s, &[o, o, o, -o]),
            GateKind::Ccz => DenseOperator::diagonal(s, &[o, o, o, o, o, o, o, -o]),
            GateKind::Cnot => DenseOperator::permutation(s, &[0, 1, 3, 2]),
            GateKind::Swap => DenseOperator::permutation(s, &[0, 2, 1, 3]),
            GateKind::Bell => {
                let cnot = DenseOperator::from_gate(&Gate::cnot(s[0], s[1]));
                cnot.mul(&DenseOperator::from_gate(&Gate::h(s[0])))
            }
            GateKind::BellDg => DenseOperator::from_gate(&Gate::bell(s[0], s[1])).adjoint(),
        }
    }

    /// `|perm[j]⟩⟨j|` for each basis index `j`.
    fn permutation(sites: Vec<usize>, perm: &[usize]) -> Self {
        let d = perm.len();
        let mut m = vec![c(0.0, 0.0); d * d];
        for (j, &p) in perm.iter().enumerate() {
            m[p * d + j] = c(1.0, 0.0);
        }
        DenseOperator { sites, matrix: m }
    }

    /// Product of CZ over the three edges of a triangle.
    pub fn cz_triangle(a: usize, b: usize, cc: usize) -> Self {
        DenseOperator::from_gate(&Gate::cz(a, b))
            .mul(&DenseOperator::from_gate(&Gate::cz(b, cc)))
            .mul(&DenseOperator::from_gate(&Gate::cz(a, cc)))
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn dim(&self) -> usize {
        1 << self.sites.len()
    }

    pub fn matrix(&self) -> &[C64] {
        &self.matrix
    }

    pub fn entry(&self, r: usize, col: usize) -> C64 {
        self.matrix[r * self.dim() + col]
    }

    /// Tensor product with an operator on disjoint sites; `self`'s sites come first.
    pub fn kron(&self, other: &DenseOperator) -> DenseOperator {
        let (da, db) = (self.dim(), other.dim());
        let d = da * db;
        let mut m = vec![c(0.0, 0.0); d * d];
        for r1 in 0..da {
            for c1 in 0..da {
                let a = self.matrix[r1 * da + c1];
                if a == c(0.0, 0.0) {
                    continue;
                }
                for r2 in 0..db {
                    for c2 in 0..db {
                        m[(r1 * db + r2) * d + c1 * db + c2] = a * other.matrix[r2 * db + c2];
                    }
                }
            }
        }
        let mut sites = self.sites.clone();
        sites.extend(&other.sites);
        DenseOperator { sites, matrix: m }
    }

    /// Re-expresses the operator on `target`, which must contain every site of `self`.
    pub fn embed(&self, target: &[usize]) -> DenseOperator {
        let k = target.len();
        let d = 1usize << k;
        let pos: Vec<usize> = self
            .sites
            .iter()
            .map(|s| target.iter().position(|t| t == s).expect("embedding target misses a site"))
            .collect();
        let own_mask: usize = pos.iter().map(|&p| 1usize << (k - 1 - p)).sum();
        let local =
            |idx: usize| -> usize { pos.iter().fold(0usize, |acc, &p| (acc << 1) | ((idx >> (k - 1 - p)) & 1)) };
        let mut m = vec![c(0.0, 0.0); d * d];
        for r in 0..d {
            for col in 0..d {
                if r & !own_mask == col & !own_mask {
                    m[r * d + col] = self.entry(local(r), local(col));
                }
            }
        }
        DenseOperator { sites: target.to_vec(), matrix: m }
    }

    /// Matrix product `self · other` on the union of both site lists.
    pub fn mul(&self, other: &DenseOperator) -> DenseOperator {
        let mut union = self.sites.clone();
        for s in &other.sites {
            if !union.contains(s) {
                union.push(*s);
            }
        }
        let (a, b) = (self.embed(&union), other.embed(&union));
        let d = a.dim();
        let mut m = vec![c(0.0, 0.0); d * d];
        for r in 0..d {
            for k in 0..d {
                let x = a.matrix[r * d + k];
                if x == c(0.0, 0.0) {
                    continue;
                }
                for col in 0..d {
                    m[r * d + col] += x * b.matrix[k * d + col];
                }
            }
        }
        DenseOperator { sites: union, matrix: m }
    }

    pub fn adjoint(&self) -> DenseOperator {
        let d = self.dim();
        let mut m = vec![c(0.0, 0.0); d * d];
        for r in 0..d {
            for col in 0..d {
                m[col * d + r] = self.matrix[r * d + col].conj();
            }
        }
        DenseOperator { sites: self.sites.clone(), matrix: m }
    }

    /// Largest entrywise deviation after aligning both operators on a common site list.
    pub fn distance(&self, other: &DenseOperator) -> f64 {
        let mut union = self.sites.clone();
        for s in &other.sites {
            if !union.contains(s) {
                union.push(*s);
            }
        }
        let (a, b) = (self.embed(&union), other.embed(&union));
        a.matrix.iter().zip(&b.matrix).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, k: C64) -> DenseOperator {
        DenseOperator { sites: self.sites.clone(), matrix: self.matrix.iter().map(|v| v * k).collect() }
    }

    pub fn unitarity_defect(&self) -> f64 {
        self.adjoint().mul(self).distance(&DenseOperator::identity(self.sites.clone()))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.distance(&self.adjoint()) <= tol
    }

    /// `Some(true)` if the two operators commute, `Some(false)` if they
    /// anticommute, `None` otherwise.
    pub fn commutation(&self, other: &DenseOperator, tol: f64) -> Option<bool> {
        let (ab, ba) = (self.mul(other), other.mul(self));
        if ab.distance(&ba) <= tol {
            Some(true)
        } else if ab.distance(&ba.scaled(c(-1.0, 0.0))) <= tol {
            Some(false)
        } else {
            None
        }
    }
}
