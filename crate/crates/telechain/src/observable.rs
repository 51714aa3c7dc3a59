//! Two-outcome observables reduced to their involutory part.
//!
//! Only the eigenbasis of a two-outcome observable matters for the
//! measurement channel, so a Hermitian `A` with eigenvalues `λ0 > λ1` is
//! replaced by `Ā = (2A − (λ0+λ1)) / (λ0−λ1)`, a unit Bloch axis. Outcome 0
//! is the `+1` eigenvalue of `Ā`, i.e. the larger eigenvalue of `A`.

use std::fmt;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::pauli::{Pauli, PauliString};

/// Snap tolerance for recognising an exact Pauli axis.
const AXIS_SNAP: f64 = 1e-12;
pub const UNIT_TOL: f64 = 1e-10;
pub const GAP_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("degenerate spectrum (gap {0:e}): the measurement is uninformative")]
    Trivial(f64),
    #[error("Bloch axis has norm {0}, expected 1")]
    NotUnit(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Axis {
    /// `±P` for a Pauli `P ≠ I`.
    Pauli { pauli: Pauli, negative: bool },
    /// A unit vector `n`, meaning `n·σ`.
    Bloch([f64; 3]),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvolutoryObservable {
    pub site: usize,
    pub axis: Axis,
}

impl InvolutoryObservable {
    pub fn pauli(site: usize, pauli: Pauli) -> Self {
        assert!(pauli != Pauli::I, "identity is not a two-outcome observable");
        InvolutoryObservable { site, axis: Axis::Pauli { pauli, negative: false } }
    }

    /// Accepts a unit vector; exact (±) coordinate axes become Pauli axes.
    pub fn from_bloch(site: usize, n: [f64; 3]) -> Result<Self, ObservableError> {
        let norm = n.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(ObservableError::NotUnit(norm));
        }
        let n = n.map(|c| c / norm);
        for (k, p) in [Pauli::X, Pauli::Y, Pauli::Z].into_iter().enumerate() {
            let others = (0..3).filter(|&j| j != k).all(|j| n[j].abs() < AXIS_SNAP);
            if others && (n[k].abs() - 1.0).abs() < AXIS_SNAP {
                return Ok(InvolutoryObservable { site, axis: Axis::Pauli { pauli: p, negative: n[k] < 0.0 } });
            }
        }
        Ok(InvolutoryObservable { site, axis: Axis::Bloch(n) })
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        match self.axis {
            Axis::Bloch(n) => n,
            Axis::Pauli { pauli, negative } => {
                let s = if negative { -1.0 } else { 1.0 };
                match pauli {
                    Pauli::X => [s, 0.0, 0.0],
                    Pauli::Y => [0.0, s, 0.0],
                    Pauli::Z => [0.0, 0.0, s],
                    Pauli::I => unreachable!(),
                }
            }
        }
    }

    /// Row-major 2×2 matrix of `n·σ`.
    pub fn matrix(&self) -> [C64; 4] {
        let [x, y, z] = self.unit_vector();
        [C64::new(z, 0.0), C64::new(x, -y), C64::new(x, y), C64::new(-z, 0.0)]
    }

    pub fn is_pauli(&self) -> bool {
        matches!(self.axis, Axis::Pauli { .. })
    }

    pub fn to_pauli_string(&self, num_sites: usize) -> Option<PauliString> {
        match self.axis {
            Axis::Pauli { pauli, negative } => {
                let mut p = PauliString::single(num_sites, self.site, pauli);
                if negative {
                    p.negate();
                }
                Some(p)
            }
            Axis::Bloch(_) => None,
        }
    }
}

impl fmt::Display for InvolutoryObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.axis {
            Axis::Pauli { pauli, negative } => {
                write!(f, "{}{}{}", if negative { "-" } else { "" }, pauli.symbol(), self.site)
            }
            Axis::Bloch([x, y, z]) => write!(f, "n{}({x:.6},{y:.6},{z:.6})", self.site),
        }
    }
}

/// Involutory part of a 2×2 Hermitian matrix (row-major) measured on `site`.
pub fn involutory_part(site: usize, a: [C64; 4]) -> Result<InvolutoryObservable, ObservableError> {
    let herm = (a[1] - a[2].conj()).norm().max(a[0].im.abs()).max(a[3].im.abs());
    if herm > 1e-10 {
        return Err(ObservableError::NotHermitian(herm));
    }
    // a = a0·1 + (ax, ay, az)·σ
    let v = [a[1].re, -a[1].im, (a[0].re - a[3].re) / 2.0];
    let half_gap = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if 2.0 * half_gap <= GAP_TOL {
        return Err(ObservableError::Trivial(2.0 * half_gap));
    }
    InvolutoryObservable::from_bloch(site, v.map(|c| c / half_gap))
}

/// Hermitian matrix `(t/2)·1 + (g/2)·n̂·σ`: eigenvalues `(t ± g)/2` along `n̂`.
pub fn hermitian_from_bloch(direction: [f64; 3], trace: f64, gap: f64) -> [C64; 4] {
    let norm = direction.iter().map(|c| c * c).sum::<f64>().sqrt();
    let n = if norm > 0.0 { direction.map(|c| c / norm) } else { [0.0; 3] };
    let (h, g) = (trace / 2.0, gap / 2.0);
    [
        C64::new(h + g * n[2], 0.0),
        C64::new(g * n[0], -g * n[1]),
        C64::new(g * n[0], g * n[1]),
        C64::new(h - g * n[2], 0.0),
    ]
}

/// A measured observable in a canonical protocol: a Pauli string (possibly
/// multi-site after Clifford pull-through) or a general single-site axis.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    Pauli(PauliString),
    Axis(InvolutoryObservable),
}

impl Observable {
    pub fn from_involutory(obs: &InvolutoryObservable, num_sites: usize) -> Self {
        match obs.to_pauli_string(num_sites) {
            Some(p) => Observable::Pauli(p),
            None => Observable::Axis(*obs),
        }
    }

    pub fn as_pauli(&self) -> Option<&PauliString> {
        match self {
            Observable::Pauli(p) => Some(p),
            Observable::Axis(_) => None,
        }
    }

    pub fn support(&self) -> Vec<usize> {
        match self {
            Observable::Pauli(p) => p.support(),
            Observable::Axis(a) => vec![a.site],
        }
    }

    /// Exact commutation test. Two distinct single-site axes on one site
    /// commute only when parallel.
    pub fn commutes_with(&self, other: &Observable) -> bool {
        match (self, other) {
            (Observable::Pauli(p), Observable::Pauli(q)) => p.commutes_with(q),
            _ => {
                let (sa, sb) = (self.support(), other.support());
                let shared: Vec<usize> = sa.iter().copied().filter(|s| sb.contains(s)).collect();
                if shared.is_empty() {
                    return true;
                }
                let (va, vb) = (self.local_axes(), other.local_axes());
                // Both single-site or one is a Pauli string overlapping an axis site.
                let mut anticommuting = 0usize;
                for s in shared {
                    let (a, b) = (va(s), vb(s));
                    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
                    if (dot.abs() - 1.0).abs() < AXIS_SNAP {
                        continue;
                    }
                    if dot.abs() < AXIS_SNAP {
                        anticommuting += 1;
                    } else {
                        return false;
                    }
                }
                anticommuting % 2 == 0
            }
        }
    }

    fn local_axes(&self) -> impl Fn(usize) -> [f64; 3] + '_ {
        move |s| match self {
            Observable::Axis(a) => a.unit_vector(),
            Observable::Pauli(p) => match p.get(s) {
                Pauli::X => [1.0, 0.0, 0.0],
                Pauli::Y => [0.0, 1.0, 0.0],
                Pauli::Z => [0.0, 0.0, 1.0],
                Pauli::I => [0.0, 0.0, 0.0],
            },
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Pauli(p) => f.write_str(&p.to_sparse()),
            Observable::Axis(a) => write!(f, "{a}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(a: f64, b: f64) -> [C64; 4] {
        [C64::new(a, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(b, 0.0)]
    }

    #[test]
    fn involutory_examples() {
        let z = involutory_part(1, diag(3.0, 1.0)).unwrap();
        assert_eq!(z.axis, Axis::Pauli { pauli: Pauli::Z, negative: false });
        let x = [C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        assert_eq!(involutory_part(1, x).unwrap().axis, Axis::Pauli { pauli: Pauli::X, negative: false });
        assert!(matches!(involutory_part(1, diag(5.0, 5.0)), Err(ObservableError::Trivial(_))));
        // Larger eigenvalue on |1> flips the axis.
        let mz = involutory_part(1, diag(-1.0, 2.0)).unwrap();
        assert_eq!(mz.axis, Axis::Pauli { pauli: Pauli::Z, negative: true });
    }

    #[test]
    fn bloch_round_trip() {
        let a = hermitian_from_bloch([0.0, 2.0, 0.0], 3.0, 0.5);
        let o = involutory_part(4, a).unwrap();
        assert_eq!(o.axis, Axis::Pauli { pauli: Pauli::Y, negative: false });
        assert!(InvolutoryObservable::from_bloch(1, [0.5, 0.0, 0.0]).is_err());
    }

    #[test]
    fn axis_commutation() {
        let x = Observable::Axis(InvolutoryObservable::from_bloch(2, [0.6, 0.8, 0.0]).unwrap());
        let z = Observable::Pauli(PauliString::single(3, 2, Pauli::Z));
        let far = Observable::Pauli(PauliString::single(3, 3, Pauli::X));
        assert!(!x.commutes_with(&Observable::Pauli(PauliString::single(3, 2, Pauli::X))));
        assert!(x.commutes_with(&far));
        // Orthogonal axes anticommute, which is still "not commuting".
        assert!(!x.commutes_with(&z));
    }
}
