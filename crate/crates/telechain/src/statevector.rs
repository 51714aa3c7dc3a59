//! Dense statevector simulation.
//!
//! Site 1 is the most significant bit of the basis index. Measurement
//! outcomes are kept as a classical record; [`StateVector::dilate_measurement`]
//! and [`StateVector::apply_parity_controlled`] provide the explicit
//! Stinespring form for small cross-checks.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseOperator;
use crate::error::{Error, Result};
use crate::observable::{InvolutoryObservable, Observable};
use crate::pauli::{Pauli, PauliString, Phase};
use crate::product::{LogicalInput, ProductState};

/// Largest chain simulated densely (2^24 amplitudes, 256 MiB).
pub const MAX_DENSE_SITES: usize = 24;
/// Forced branches at or below this probability are rejected.
pub const IMPOSSIBLE: f64 = 1e-12;

pub fn phase_value(p: Phase) -> C64 {
    [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)][p.exponent() as usize]
}

/// Generator for trajectory `stream` of a run seeded with `seed`.
pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MeasureMode {
    /// Take this outcome; it must have nonzero probability.
    Forced(u8),
    /// Outcome 0 iff `u < p0`, with `u` uniform in `[0, 1)`.
    Uniform(f64),
}

impl MeasureMode {
    pub fn sampled(rng: &mut impl Rng) -> Self {
        MeasureMode::Uniform(rng.random::<f64>())
    }

    pub(crate) fn choose(self, p0: f64, id: &str) -> Result<u8> {
        let outcome = match self {
            MeasureMode::Forced(b) => b,
            MeasureMode::Uniform(u) => u8::from(u >= p0),
        };
        let p = if outcome == 0 { p0 } else { 1.0 - p0 };
        if p <= IMPOSSIBLE {
            return Err(Error::ImpossibleOutcome {
                id: id.to_string(),
                outcome,
                probability: p,
                prefix: String::new(),
            });
        }
        Ok(outcome)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeRecord {
    pub id: String,
    pub outcome: u8,
    pub probability: f64,
}

#[derive(Clone, Debug)]
pub struct StateVector {
    n: usize,
    amps: Vec<C64>,
    record: Vec<OutcomeRecord>,
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

impl StateVector {
    pub fn zeros(num_sites: usize) -> Result<Self> {
        if num_sites > MAX_DENSE_SITES {
            return Err(Error::TooLarge { num_sites, limit: MAX_DENSE_SITES });
        }
        let mut amps = vec![zero(); 1usize << num_sites];
        amps[0] = C64::new(1.0, 0.0);
        Ok(StateVector { n: num_sites, amps, record: Vec::new() })
    }

    /// Product state with each `logical:n` site holding `logical[n-1]`.
    pub fn init_product_state(state: &ProductState, logical: &[LogicalInput]) -> Result<Self> {
        let n = state.num_sites();
        if logical.len() != state.num_logical() {
            return Err(Error::LogicalSlots(format!(
                "{} inputs supplied for {} logical sites",
                logical.len(),
                state.num_logical()
            )));
        }
        for l in logical {
            LogicalInput::new(l.alpha, l.beta)?;
        }
        let mut sv = StateVector::zeros(n)?;
        sv.amps[0] = C64::new(1.0, 0.0);
        let mut len = 1usize;
        // Build the Kronecker product site by site, site 1 most significant.
        for label in state.labels() {
            let (a0, a1) = label.amplitudes(logical);
            for i in (0..len).rev() {
                let v = sv.amps[i];
                sv.amps[2 * i] = v * a0;
                sv.amps[2 * i + 1] = v * a1;
            }
            len *= 2;
        }
        Ok(sv)
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let n = amps.len().trailing_zeros() as usize;
        if amps.len() != 1 << n {
            return Err(Error::Usage("amplitude count is not a power of two".into()));
        }
        Ok(StateVector { n, amps, record: Vec::new() })
    }

    pub fn num_sites(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn record(&self) -> &[OutcomeRecord] {
        &self.record
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn bit(&self, site: usize) -> usize {
        1usize << (self.n - site)
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site == 0 || site > self.n {
            return Err(Error::SiteRange { site, num_sites: self.n });
        }
        Ok(())
    }

    fn masks(&self, p: &PauliString) -> Result<(usize, usize, u32)> {
        if p.num_sites() != self.n {
            return Err(Error::SiteRange { site: p.num_sites(), num_sites: self.n });
        }
        let (mut xm, mut zm, mut ny) = (0usize, 0usize, 0u32);
        for s in p.support() {
            let b = self.bit(s);
            match p.get(s) {
                Pauli::X => xm |= b,
                Pauli::Z => zm |= b,
                Pauli::Y => {
                    xm |= b;
                    zm |= b;
                    ny += 1;
                }
                Pauli::I => {}
            }
        }
        Ok((xm, zm, ny))
    }

    /// `P|ψ⟩` written into a fresh buffer.
    fn pauli_image(&self, p: &PauliString) -> Result<Vec<C64>> {
        let (xm, zm, ny) = self.masks(p)?;
        // Y = i·X·Z, so P = i^{φ + nY} X^x Z^z.
        let ph = phase_value(Phase::from_exponent(p.phase().exponent() as i64 + ny as i64));
        let mut out = vec![zero(); self.amps.len()];
        for (b, a) in self.amps.iter().enumerate() {
            let sign = if (b & zm).count_ones() & 1 == 1 { -1.0 } else { 1.0 };
            out[b ^ xm] = a * ph * sign;
        }
        Ok(out)
    }

    pub fn apply_pauli(&mut self, p: &PauliString) -> Result<()> {
        self.amps = self.pauli_image(p)?;
        Ok(())
    }

    pub fn apply_unitary(&mut self, op: &DenseOperator) -> Result<()> {
        let defect = op.unitarity_defect();
        if defect > 1e-12 {
            return Err(crate::dense::DenseError::NotUnitary(defect).into());
        }
        self.apply_operator(op)
    }

    /// Applies `op` without a unitarity check.
    pub fn apply_operator(&mut self, op: &DenseOperator) -> Result<()> {
        for &s in op.sites() {
            self.check_site(s)?;
        }
        let k = op.sites().len();
        let bits: Vec<usize> = op.sites().iter().map(|&s| self.bit(s)).collect();
        let mask: usize = bits.iter().sum();
        let d = 1usize << k;
        let offsets: Vec<usize> =
            (0..d).map(|j| (0..k).filter(|&q| (j >> (k - 1 - q)) & 1 == 1).map(|q| bits[q]).sum()).collect();
        // Diagonal gates (CZ, CCZ, S, Z) are common; skip the dense product for them.
        let diagonal = (0..d).all(|r| (0..d).all(|c| r == c || op.entry(r, c) == zero()));
        let m = op.matrix();
        let mut buf = vec![zero(); d];
        for base in 0..self.amps.len() {
            if base & mask != 0 {
                continue;
            }
            if diagonal {
                for (j, off) in offsets.iter().enumerate() {
                    self.amps[base + off] *= m[j * d + j];
                }
                continue;
            }
            for (j, off) in offsets.iter().enumerate() {
                buf[j] = self.amps[base + off];
            }
            for (r, off) in offsets.iter().enumerate() {
                self.amps[base + off] = (0..d).map(|c| m[r * d + c] * buf[c]).sum();
            }
        }
        Ok(())
    }

    pub fn apply_gate(&mut self, g: &crate::gate::Gate) -> Result<()> {
        g.check_range(self.n)?;
        self.apply_operator(&DenseOperator::from_gate(g))
    }

    pub fn apply_circuit(&mut self, c: &crate::gate::Circuit) -> Result<()> {
        for g in c.gates() {
            self.apply_gate(g)?;
        }
        Ok(())
    }

    fn observable_image(&self, obs: &Observable) -> Result<Vec<C64>> {
        match obs {
            Observable::Pauli(p) => self.pauli_image(p),
            Observable::Axis(a) => {
                let mut tmp = self.clone();
                tmp.apply_operator(&single_site(a))?;
                Ok(tmp.amps)
            }
        }
    }

    /// Probability of outcome 0 (eigenvalue +1) of an involutory observable.
    pub fn probability_zero(&self, obs: &Observable) -> Result<f64> {
        let img = self.observable_image(obs)?;
        let e: f64 = self.amps.iter().zip(&img).map(|(a, b)| (a.conj() * b).re).sum();
        Ok(((1.0 + e) / 2.0).clamp(0.0, 1.0))
    }

    /// Projective measurement of `obs`; returns `(outcome, probability)`.
    pub fn measure(&mut self, id: &str, obs: &Observable, mode: MeasureMode) -> Result<(u8, f64)> {
        let img = self.observable_image(obs)?;
        let e: f64 = self.amps.iter().zip(&img).map(|(a, b)| (a.conj() * b).re).sum();
        let p0 = ((1.0 + e) / 2.0).clamp(0.0, 1.0);
        let outcome = mode.choose(p0, id)?;
        let p = if outcome == 0 { p0 } else { 1.0 - p0 };
        let s = if outcome == 0 { 0.5 } else { -0.5 };
        let scale = 1.0 / p.sqrt();
        for (a, b) in self.amps.iter_mut().zip(&img) {
            *a = (*a * 0.5 + b * s) * scale;
        }
        self.record.push(OutcomeRecord { id: id.to_string(), outcome, probability: p });
        Ok((outcome, p))
    }

    pub fn measure_involutory(&mut self, id: &str, obs: &InvolutoryObservable, mode: MeasureMode) -> Result<(u8, f64)> {
        self.measure(id, &Observable::from_involutory(obs, self.n), mode)
    }

    pub fn expectation_pauli(&self, p: &PauliString) -> Result<C64> {
        let (xm, zm, ny) = self.masks(p)?;
        let ph = phase_value(Phase::from_exponent(p.phase().exponent() as i64 + ny as i64));
        let mut acc = zero();
        for (b, a) in self.amps.iter().enumerate() {
            let sign = if (b & zm).count_ones() & 1 == 1 { -1.0 } else { 1.0 };
            acc += self.amps[b ^ xm].conj() * a * sign;
        }
        Ok(acc * ph)
    }

    /// `⟨ψ| D_1 ⋯ D_m P |ψ⟩` for dense factors (applied right to left) and a Pauli string.
    pub fn expectation_product(&self, dense: &[DenseOperator], p: &PauliString) -> Result<C64> {
        let mut phi = self.clone();
        phi.amps = self.pauli_image(p)?;
        for d in dense.iter().rev() {
            phi.apply_operator(d)?;
        }
        Ok(self.inner(&phi))
    }

    pub fn expectation(&self, obs: &Observable) -> Result<C64> {
        let img = self.observable_image(obs)?;
        Ok(self.amps.iter().zip(&img).map(|(a, b)| a.conj() * b).sum())
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// `|⟨self|other⟩|²`, insensitive to global phase.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Reduced density matrix on `sites` (first listed = most significant), row-major.
    pub fn reduced_density(&self, sites: &[usize]) -> Result<Vec<C64>> {
        for &s in sites {
            self.check_site(s)?;
        }
        let k = sites.len();
        let d = 1usize << k;
        let bits: Vec<usize> = sites.iter().map(|&s| self.bit(s)).collect();
        let mask: usize = bits.iter().sum();
        let offsets: Vec<usize> =
            (0..d).map(|j| (0..k).filter(|&q| (j >> (k - 1 - q)) & 1 == 1).map(|q| bits[q]).sum()).collect();
        let mut rho = vec![zero(); d * d];
        for base in 0..self.amps.len() {
            if base & mask != 0 {
                continue;
            }
            for r in 0..d {
                let ar = self.amps[base + offsets[r]];
                if ar == zero() {
                    continue;
                }
                for c in 0..d {
                    rho[r * d + c] += ar * self.amps[base + offsets[c]].conj();
                }
            }
        }
        Ok(rho)
    }

    /// One-site Bloch vector and fidelity with a reference pure state.
    pub fn logical_tomography(&self, site: usize, reference: &LogicalInput) -> Result<Tomography> {
        let rho = self.reduced_density(&[site])?;
        Ok(Tomography::from_density(&rho, reference))
    }

    /// `⟨ψ_ref|ρ|ψ_ref⟩` for a pure reference on `sites`.
    pub fn reduced_fidelity(&self, sites: &[usize], reference: &[C64]) -> Result<f64> {
        let rho = self.reduced_density(sites)?;
        let d = reference.len();
        let mut f = zero();
        for r in 0..d {
            for c in 0..d {
                f += reference[r].conj() * rho[r * d + c] * reference[c];
            }
        }
        Ok(f.re)
    }

    /// Stinespring form of a measurement: `|ψ⟩|0⟩_r ↦ P_0|ψ⟩|0⟩_r + P_1|ψ⟩|1⟩_r`
    /// with `register` a physical site of this (enlarged) state holding `|0⟩`.
    pub fn dilate_measurement(&mut self, obs: &Observable, register: usize) -> Result<()> {
        self.check_site(register)?;
        let img = self.observable_image(obs)?;
        let rb = self.bit(register);
        let old = std::mem::take(&mut self.amps);
        self.amps = vec![zero(); old.len()];
        for b in 0..old.len() {
            if b & rb != 0 {
                continue;
            }
            self.amps[b] = (old[b] + img[b]) * 0.5;
            self.amps[b | rb] = (old[b] - img[b]) * 0.5;
        }
        Ok(())
    }

    /// Applies `p` on basis states whose registers have odd parity.
    pub fn apply_parity_controlled(&mut self, p: &PauliString, registers: &[usize]) -> Result<()> {
        let img = self.pauli_image(p)?;
        let rm: usize = registers.iter().map(|&s| self.bit(s)).fold(0, |a, b| a ^ b);
        for (b, a) in self.amps.iter_mut().enumerate() {
            if (b & rm).count_ones() & 1 == 1 {
                *a = img[b];
            }
        }
        Ok(())
    }
}

/// Dense 2×2 operator for a single-site involutory observable.
pub fn single_site(a: &InvolutoryObservable) -> DenseOperator {
    DenseOperator::new(vec![a.site], a.matrix().to_vec()).expect("2x2 matrix")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tomography {
    pub bloch: [f64; 3],
    pub fidelity: f64,
}

impl Tomography {
    pub fn from_density(rho: &[C64], reference: &LogicalInput) -> Self {
        let bloch = [2.0 * rho[2].re, 2.0 * rho[2].im, (rho[0] - rho[3]).re];
        let (a, b) = (reference.alpha, reference.beta);
        let f = a.conj() * rho[0] * a + a.conj() * rho[1] * b + b.conj() * rho[2] * a + b.conj() * rho[3] * b;
        Tomography { bloch, fidelity: f.re }
    }
}
