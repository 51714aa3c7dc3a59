//! Named gates, layered circuits and exact Clifford conjugation of Pauli strings.

use std::fmt;

use thiserror::Error;

use crate::pauli::PauliString;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GateError {
    #[error("unknown gate {0:?}")]
    Unknown(String),
    #[error("gate {gate} takes {expected} sites, got {found}")]
    Arity { gate: &'static str, expected: usize, found: usize },
    #[error("gate {gate} repeats site {site}")]
    RepeatedSite { gate: &'static str, site: usize },
    #[error("site {site} out of range 1..={num_sites}")]
    SiteRange { site: usize, num_sites: usize },
    #[error("layer {layer} applies two gates to site {site}")]
    LayerOverlap { layer: usize, site: usize },
    #[error("gate {0} is not Clifford; Pauli conjugation is unavailable")]
    NonClifford(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GateKind {
    H,
    S,
    Sdg,
    X,
    Y,
    Z,
    Cz,
    /// Control is the first site.
    Cnot,
    Swap,
    /// Bell encoder `CNOT(a→b)·H_a`: maps `|00⟩` to `(|00⟩+|11⟩)/√2`.
    Bell,
    /// Inverse of [`GateKind::Bell`].
    BellDg,
    Ccz,
}

impl GateKind {
    pub const ALL: [GateKind; 12] = [
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
        GateKind::Ccz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::X => "x",
            GateKind::Y => "y",
            GateKind::Z => "z",
            GateKind::Cz => "cz",
            GateKind::Cnot => "cnot",
            GateKind::Swap => "swap",
            GateKind::Bell => "bell",
            GateKind::BellDg => "bell_dg",
            GateKind::Ccz => "ccz",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, GateError> {
        let lower = name.to_ascii_lowercase();
        GateKind::ALL.into_iter().find(|k| k.name() == lower).ok_or_else(|| GateError::Unknown(name.to_string()))
    }

    pub fn arity(self) -> usize {
        match self {
            GateKind::H | GateKind::S | GateKind::Sdg | GateKind::X | GateKind::Y | GateKind::Z => 1,
            GateKind::Ccz => 3,
            _ => 2,
        }
    }

    pub fn is_clifford(self) -> bool {
        self != GateKind::Ccz
    }

    pub fn inverse(self) -> GateKind {
        match self {
            GateKind::S => GateKind::Sdg,
            GateKind::Sdg => GateKind::S,
            GateKind::Bell => GateKind::BellDg,
            GateKind::BellDg => GateKind::Bell,
            k => k,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Gate {
    pub kind: GateKind,
    pub sites: Vec<usize>,
}

impl Gate {
    pub fn new(kind: GateKind, sites: Vec<usize>) -> Result<Self, GateError> {
        if sites.len() != kind.arity() {
            return Err(GateError::Arity { gate: kind.name(), expected: kind.arity(), found: sites.len() });
        }
        for (i, &s) in sites.iter().enumerate() {
            if sites[..i].contains(&s) {
                return Err(GateError::RepeatedSite { gate: kind.name(), site: s });
            }
        }
        Ok(Gate { kind, sites })
    }

    fn raw(kind: GateKind, sites: &[usize]) -> Self {
        Gate::new(kind, sites.to_vec()).expect("well-formed builtin gate")
    }

    pub fn h(a: usize) -> Self {
        Gate::raw(GateKind::H, &[a])
    }
    pub fn s(a: usize) -> Self {
        Gate::raw(GateKind::S, &[a])
    }
    pub fn cz(a: usize, b: usize) -> Self {
        Gate::raw(GateKind::Cz, &[a, b])
    }
    pub fn cnot(c: usize, t: usize) -> Self {
        Gate::raw(GateKind::Cnot, &[c, t])
    }
    pub fn swap(a: usize, b: usize) -> Self {
        Gate::raw(GateKind::Swap, &[a, b])
    }
    pub fn bell(a: usize, b: usize) -> Self {
        Gate::raw(GateKind::Bell, &[a, b])
    }
    pub fn bell_dg(a: usize, b: usize) -> Self {
        Gate::raw(GateKind::BellDg, &[a, b])
    }
    pub fn ccz(a: usize, b: usize, c: usize) -> Self {
        Gate::raw(GateKind::Ccz, &[a, b, c])
    }

    pub fn inverse(&self) -> Gate {
        Gate { kind: self.kind.inverse(), sites: self.sites.clone() }
    }

    /// Largest chain distance between two sites acted on by this gate.
    pub fn span(&self) -> usize {
        let lo = self.sites.iter().min().copied().unwrap_or(0);
        let hi = self.sites.iter().max().copied().unwrap_or(0);
        hi - lo
    }

    pub fn check_range(&self, num_sites: usize) -> Result<(), GateError> {
        match self.sites.iter().find(|&&s| s == 0 || s > num_sites) {
            Some(&site) => Err(GateError::SiteRange { site, num_sites }),
            None => Ok(()),
        }
    }

    /// `p <- g p g†`.
    pub fn conjugate_in_place(&self, p: &mut PauliString) -> Result<(), GateError> {
        apply_forward(self.kind, &self.sites, p)
    }

    /// `p <- g† p g`.
    pub fn conjugate_inverse_in_place(&self, p: &mut PauliString) -> Result<(), GateError> {
        apply_forward(self.kind.inverse(), &self.sites, p)
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.sites.iter().map(|s| s.to_string()).collect();
        write!(f, "{}({})", self.kind.name(), s.join(","))
    }
}

/// The forward image `g p g†` under a Clifford gate, with exact phase.
pub fn conjugate(g: &Gate, p: &PauliString) -> Result<PauliString, GateError> {
    let mut out = p.clone();
    g.conjugate_in_place(&mut out)?;
    Ok(out)
}

fn h1(p: &mut PauliString, a: usize) {
    let (x, z) = (p.x_bit(a), p.z_bit(a));
    if x && z {
        p.negate();
    }
    p.set_bits(a, z, x);
}

fn cnot2(p: &mut PauliString, c: usize, t: usize) {
    let (xc, zc, xt, zt) = (p.x_bit(c), p.z_bit(c), p.x_bit(t), p.z_bit(t));
    if xc && zt && !(xt ^ zc) {
        p.negate();
    }
    p.set_bits(t, xt ^ xc, zt);
    p.set_bits(c, xc, zc ^ zt);
}

fn apply_forward(kind: GateKind, sites: &[usize], p: &mut PauliString) -> Result<(), GateError> {
    let a = sites[0];
    match kind {
        GateKind::H => h1(p, a),
        GateKind::S => {
            let (x, z) = (p.x_bit(a), p.z_bit(a));
            if x && z {
                p.negate();
            }
            p.set_bits(a, x, z ^ x);
        }
        GateKind::Sdg => {
            let (x, z) = (p.x_bit(a), p.z_bit(a));
            if x && !z {
                p.negate();
            }
            p.set_bits(a, x, z ^ x);
        }
        GateKind::X => {
            if p.z_bit(a) {
                p.negate();
            }
        }
        GateKind::Y => {
            if p.x_bit(a) ^ p.z_bit(a) {
                p.negate();
            }
        }
        GateKind::Z => {
            if p.x_bit(a) {
                p.negate();
            }
        }
        GateKind::Cz => {
            let b = sites[1];
            let (xa, za, xb, zb) = (p.x_bit(a), p.z_bit(a), p.x_bit(b), p.z_bit(b));
            if xa && xb && (za ^ zb) {
                p.negate();
            }
            p.set_bits(a, xa, za ^ xb);
            p.set_bits(b, xb, zb ^ xa);
        }
        GateKind::Cnot => cnot2(p, a, sites[1]),
        GateKind::Swap => {
            let b = sites[1];
            let (pa, pb) = (p.get(a), p.get(b));
            p.set(a, pb);
            p.set(b, pa);
        }
        GateKind::Bell => {
            h1(p, a);
            cnot2(p, a, sites[1]);
        }
        GateKind::BellDg => {
            cnot2(p, a, sites[1]);
            h1(p, a);
        }
        GateKind::Ccz => return Err(GateError::NonClifford(kind.name())),
    }
    Ok(())
}

/// A layered circuit `U = L_T ⋯ L_1`; gates within a layer act on disjoint sites.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    num_sites: usize,
    layers: Vec<Vec<Gate>>,
    /// `owner[t][site-1]` is the index of the gate of layer `t` touching `site`.
    owner: Vec<Vec<u32>>,
}

const NO_GATE: u32 = u32::MAX;

impl Circuit {
    pub fn new(num_sites: usize, layers: Vec<Vec<Gate>>) -> Result<Self, GateError> {
        let mut owner = Vec::with_capacity(layers.len());
        for (t, layer) in layers.iter().enumerate() {
            let mut own = vec![NO_GATE; num_sites];
            for (gi, g) in layer.iter().enumerate() {
                g.check_range(num_sites)?;
                for &s in &g.sites {
                    if own[s - 1] != NO_GATE {
                        return Err(GateError::LayerOverlap { layer: t + 1, site: s });
                    }
                    own[s - 1] = gi as u32;
                }
            }
            owner.push(own);
        }
        Ok(Circuit { num_sites, layers, owner })
    }

    pub fn empty(num_sites: usize) -> Self {
        Circuit { num_sites, layers: Vec::new(), owner: Vec::new() }
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Vec<Gate>] {
        &self.layers
    }

    pub fn gates(&self) -> impl Iterator<Item = &Gate> {
        self.layers.iter().flatten()
    }

    pub fn is_clifford(&self) -> bool {
        self.gates().all(|g| g.kind.is_clifford())
    }

    /// Max over gates of the pairwise site distance.
    pub fn max_span(&self) -> usize {
        self.gates().map(Gate::span).max().unwrap_or(0)
    }

    fn touched(&self, t: usize, p: &PauliString) -> Vec<u32> {
        let own = &self.owner[t];
        let mut ids: Vec<u32> = p.support().into_iter().map(|s| own[s - 1]).filter(|&g| g != NO_GATE).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Heisenberg image `U† p U`, touching only gates in the light cone of `p`.
    pub fn heisenberg(&self, p: &PauliString) -> Result<PauliString, GateError> {
        let mut out = p.clone();
        for t in (0..self.layers.len()).rev() {
            for gi in self.touched(t, &out) {
                self.layers[t][gi as usize].conjugate_inverse_in_place(&mut out)?;
            }
        }
        Ok(out)
    }

    /// Schrödinger-frame image `U p U†`.
    pub fn schrodinger(&self, p: &PauliString) -> Result<PauliString, GateError> {
        let mut out = p.clone();
        for t in 0..self.layers.len() {
            for gi in self.touched(t, &out) {
                self.layers[t][gi as usize].conjugate_in_place(&mut out)?;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::{parse_pauli, Pauli};

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn conjugation_examples() {
        assert_eq!(conjugate(&Gate::h(1), &ps("X")).unwrap(), ps("Z"));
        assert_eq!(conjugate(&Gate::cz(1, 2), &ps("XI")).unwrap(), ps("XZ"));
        assert_eq!(conjugate(&Gate::s(1), &ps("X")).unwrap(), ps("Y"));
        assert_eq!(conjugate(&Gate::s(1), &ps("Y")).unwrap(), ps("-X"));
        assert!(conjugate(&Gate::ccz(1, 2, 3), &ps("XII")).is_err());
    }

    #[test]
    fn names_round_trip() {
        for k in GateKind::ALL {
            assert_eq!(GateKind::from_name(k.name()).unwrap(), k);
        }
        assert!(GateKind::from_name("t").is_err());
        assert!(Gate::new(GateKind::Cz, vec![1, 1]).is_err());
        assert!(Gate::new(GateKind::H, vec![1, 2]).is_err());
    }

    #[test]
    fn cluster_circuit_light_cone() {
        let n = 5;
        let odd: Vec<Gate> = (1..n).step_by(2).map(|j| Gate::cz(j, j + 1)).collect();
        let even: Vec<Gate> = (2..n).step_by(2).map(|j| Gate::cz(j, j + 1)).collect();
        let c = Circuit::new(n, vec![odd, even]).unwrap();
        let x3 = PauliString::single(n, 3, Pauli::X);
        assert_eq!(c.heisenberg(&x3).unwrap(), parse_pauli("IZXZI", n).unwrap());
        assert_eq!(c.schrodinger(&c.heisenberg(&x3).unwrap()).unwrap(), x3);
        assert_eq!((c.depth(), c.max_span()), (2, 1));
        assert!(Circuit::new(3, vec![vec![Gate::cz(1, 2), Gate::h(2)]]).is_err());
    }
}
