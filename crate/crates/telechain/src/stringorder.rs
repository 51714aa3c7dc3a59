//! String order parameters implied by a canonical protocol, and the SPT
//! certificate built from them.
//!
//! For slot `n` and axis `ν` the interval string `S_{a,b}` has left endpoint
//! `U Σ_a U†`, a bulk of the `ν`-attached measured observables in regions
//! `a+1..b`, and right endpoint `(U Σ_b U†)†` (or `P_f` at `b = R+1`). The
//! `Σ_s` are built region by region from `Σ_0 = P_{i_n}` and reduced by
//! dropping single-site factors that stabilize the initial product state.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::dense::DenseOperator;
use crate::error::{Error, Result};
use crate::observable::Observable;
use crate::pauli::{Pauli, PauliString, Phase};
use crate::product::{LogicalInput, ProductState};
use crate::protocol::{canonicalize, CanonicalProtocol, Protocol};
use crate::stabilizer::Axis;
use crate::statevector::StateVector;

pub const SOP_TOL: f64 = 1e-9;
/// Intervals are listed individually up to this many endpoints per string.
pub const MAX_LISTED_ENDPOINTS: usize = 64;
/// Chains up to this size are evaluated densely by default.
pub const DENSE_SOP_SITES: usize = 21;

const AXES: [Axis; 2] = [Axis::X, Axis::Z];

fn col(slot: usize, axis: Axis) -> usize {
    2 * (slot - 1) + usize::from(axis == Axis::Z)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttachmentMap {
    pub ids: Vec<String>,
    pub k: usize,
    /// `lambda[j][2(n-1) + (0 for x, 1 for z)]`.
    pub lambda: Vec<Vec<bool>>,
    pub unnecessary: Vec<String>,
    pub warnings: Vec<String>,
}

impl AttachmentMap {
    pub fn attached(&self, j: usize, slot: usize, axis: Axis) -> bool {
        self.lambda[j][col(slot, axis)]
    }

    pub fn is_attached(&self, j: usize) -> bool {
        self.lambda[j].iter().any(|&b| b)
    }

    /// Ids attached to `(slot, axis)`, in measurement order.
    pub fn attached_ids(&self, slot: usize, axis: Axis) -> Vec<&str> {
        (0..self.ids.len()).filter(|&j| self.attached(j, slot, axis)).map(|j| self.ids[j].as_str()).collect()
    }
}

/// `λ[j][(n,ν)] = 1` iff measurement `j` appears an odd number of times in
/// the parity sets of recoveries anticommuting with `P^ν_{f_n}`.
pub fn attachment_map(c: &CanonicalProtocol) -> Result<AttachmentMap> {
    let n = c.num_sites;
    let k = c.k();
    for r in &c.recoveries {
        if r.pauli.support().iter().any(|s| !c.logical_out.contains(s)) {
            return Err(Error::Protocol(format!(
                "recovery {} is not supported on the output sites",
                r.pauli.to_sparse()
            )));
        }
    }
    let ids: Vec<String> = c.measurements.iter().map(|m| m.id.clone()).collect();
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(j, id)| (id.as_str(), j)).collect();
    let mut lambda = vec![vec![false; 2 * k]; ids.len()];
    for slot in 1..=k {
        for axis in AXES {
            let p = PauliString::single(n, c.logical_out[slot - 1], axis.pauli());
            for r in &c.recoveries {
                if !r.pauli.commutes_with(&p) {
                    for id in &r.parity {
                        let j = index[id.as_str()];
                        lambda[j][col(slot, axis)] ^= true;
                    }
                }
            }
        }
    }
    let mut unnecessary = Vec::new();
    let mut warnings = Vec::new();
    for (j, row) in lambda.iter().enumerate() {
        if !row.iter().any(|&b| b) {
            unnecessary.push(ids[j].clone());
        }
        let on: Vec<usize> = (0..2 * k).filter(|&c| row[c]).collect();
        if on.len() == 2 && on[0] % 2 == 0 && on[1] == on[0] + 1 {
            warnings.push(format!("{} is attached to both axes of slot {} and nothing else", ids[j], on[0] / 2 + 1));
        }
    }
    Ok(AttachmentMap { ids, k, lambda, unnecessary, warnings })
}

/// Attached measurements that do not anticommute with an earlier kept one.
pub fn necessary_measurements(c: &CanonicalProtocol, map: &AttachmentMap) -> Vec<String> {
    let mut kept: Vec<&Observable> = Vec::new();
    let mut out = Vec::new();
    let mut by_site: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (j, m) in c.measurements.iter().enumerate() {
        if !map.is_attached(j) {
            continue;
        }
        let support = m.observable.support();
        let clash = support
            .iter()
            .flat_map(|s| by_site.get(s).into_iter().flatten())
            .any(|&q| !kept[q].commutes_with(&m.observable));
        if clash {
            continue;
        }
        for s in support {
            by_site.entry(s).or_default().push(kept.len());
        }
        kept.push(&m.observable);
        out.push(m.id.clone());
    }
    out
}

/// Regions (as measurement indices) and the reduced `Σ^ν_{n,s}` for `s = 0..=R`.
#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    pub regions: Vec<Vec<usize>>,
    /// `sigma[s][col(n, ν)]`.
    pub sigma: Vec<Vec<PauliString>>,
}

fn ideal(ops: &[PauliString]) -> bool {
    for a in 0..ops.len() {
        for b in a + 1..ops.len() {
            let partner = a % 2 == 0 && b == a + 1;
            if ops[a].commutes_with(&ops[b]) == partner {
                return false;
            }
        }
    }
    true
}

/// Greedy leftmost reduction: repeatedly multiply a factor away by the
/// signed initial stabilizer on its site, keeping the commutation pattern.
fn reduce(ops: &mut [PauliString], initial: &ProductState) {
    let n = initial.num_sites();
    loop {
        let mut changed = false;
        for idx in 0..ops.len() {
            for site in ops[idx].support() {
                let Some((p, neg)) = initial.label(site).stabilizer() else { continue };
                if ops[idx].get(site) != p {
                    continue;
                }
                let mut k = PauliString::single(n, site, p);
                if neg {
                    k.negate();
                }
                let before = std::mem::replace(&mut ops[idx], PauliString::identity(n));
                let mut trial = before.clone();
                trial.mul_right(&k);
                ops[idx] = trial;
                if ideal(ops) {
                    changed = true;
                } else {
                    ops[idx] = before;
                }
            }
        }
        if !changed {
            return;
        }
    }
}

fn measured_site(c: &CanonicalProtocol, j: usize) -> usize {
    c.measurements[j].original.site
}

/// Smallest block length `b` that cuts the site-ordered measurements into at
/// least two translates: every block repeats the attachment rows of the first
/// and covers every `(n, ν)`. A short tail joins the last block.
fn periodic_blocks(order: &[usize], map: &AttachmentMap, k: usize) -> Option<Vec<Vec<usize>>> {
    let m = order.len();
    (1..=m / 2).find_map(|b| {
        let count = m / b;
        let mut blocks: Vec<Vec<usize>> = order.chunks(b).take(count).map(<[usize]>::to_vec).collect();
        blocks.last_mut().unwrap().extend_from_slice(&order[count * b..]);
        let repeats = blocks.iter().all(|blk| (0..b).all(|i| map.lambda[blk[i]] == map.lambda[order[i]]));
        let covers = blocks.iter().all(|blk| (0..2 * k).all(|cc| blk.iter().any(|&q| map.lambda[q][cc])));
        (repeats && covers).then_some(blocks)
    })
}

/// Segmentation into measurement regions. A translation-periodic attachment
/// pattern is cut at its period; otherwise regions are grown greedily left to
/// right, each closing once it holds an observable attached to every
/// `(n, ν)` and every reduced `Σ_s` lies strictly to the right of every
/// `Σ_{s-1}`.
pub fn segment_regions(c: &CanonicalProtocol, map: &AttachmentMap) -> Result<Segmentation> {
    if !c.is_clifford() {
        return Err(Error::Unsupported("regions of a non-Clifford protocol must be declared by its generator".into()));
    }
    let obs =
        c.pauli_observables().ok_or_else(|| Error::Unsupported("segmentation needs Pauli measurements".into()))?;
    let pulled: Vec<PauliString> =
        obs.iter().map(|a| c.circuit.heisenberg(a)).collect::<std::result::Result<_, _>>()?;
    let k = c.k();
    let n = c.num_sites;
    let mut order: Vec<usize> = (0..obs.len()).collect();
    order.sort_by_key(|&j| (measured_site(c, j), j));

    let sigma0: Vec<PauliString> =
        (1..=k).flat_map(|slot| AXES.map(|a| PauliString::single(n, c.logical_in[slot - 1], a.pauli()))).collect();
    let extend = |prev: &[PauliString], region: &[usize]| -> Vec<PauliString> {
        let mut ops = prev.to_vec();
        for slot in 1..=k {
            for axis in AXES {
                for &j in region {
                    if map.attached(j, slot, axis) {
                        ops[col(slot, axis)].mul_right(&pulled[j]);
                    }
                }
            }
        }
        reduce(&mut ops, &c.initial);
        ops
    };
    let max_site = |ops: &[PauliString]| ops.iter().filter_map(PauliString::max_site).max().unwrap_or(0);

    if let Some(regions) = periodic_blocks(&order, map, k) {
        let mut sigma = vec![sigma0];
        for region in &regions {
            let next = extend(sigma.last().unwrap(), region);
            sigma.push(next);
        }
        return Ok(Segmentation { regions, sigma });
    }

    let mut regions: Vec<Vec<usize>> = Vec::new();
    let mut sigma = vec![sigma0];
    let mut current: Vec<usize> = Vec::new();
    for &j in &order {
        current.push(j);
        let covered = (0..2 * k).all(|cc| current.iter().any(|&q| map.lambda[q][cc]));
        if !covered {
            continue;
        }
        let prev = sigma.last().unwrap();
        let cand = extend(prev, &current);
        let bound = max_site(prev);
        if cand.iter().all(|s| s.min_site().is_some_and(|m| m > bound)) {
            regions.push(std::mem::take(&mut current));
            sigma.push(cand);
        }
    }
    if !current.is_empty() {
        if regions.is_empty() {
            let cand = extend(&sigma[0], &current);
            regions.push(current);
            sigma.push(cand);
        } else {
            let last = regions.last_mut().unwrap();
            last.extend(current);
            last.sort_by_key(|&j| (measured_site(c, j), j));
            sigma.pop();
            let cand = extend(sigma.last().unwrap(), last);
            sigma.push(cand);
        }
    }
    Ok(Segmentation { regions, sigma })
}

/// A string order parameter: `D_L · P · D_R` with `P` a Pauli string and
/// optional dense endpoint decorations.
#[derive(Clone, Debug, PartialEq)]
pub struct Sop {
    pub slot: usize,
    pub axis: Axis,
    pub interval: (usize, usize),
    pub left: String,
    pub bulk: String,
    pub right: String,
    pub pauli: PauliString,
    pub dense: Vec<DenseOperator>,
}

impl Sop {
    pub fn operator_text(&self) -> String {
        if self.dense.is_empty() {
            self.pauli.to_sparse()
        } else {
            format!("{} · {} · {}", self.left, self.bulk, self.right)
        }
    }
}

/// How expectations are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SopBackend {
    Auto,
    Statevector,
    Stabilizer,
}

/// The resource state `U|Ψ_0⟩` (logical inputs set to `|0⟩`), dense or in
/// the Heisenberg frame of the initial product state.
pub enum Resource<'a> {
    Dense(StateVector),
    Frame { c: &'a CanonicalProtocol, logical: Vec<LogicalInput> },
}

impl<'a> Resource<'a> {
    pub fn new(c: &'a CanonicalProtocol, backend: SopBackend) -> Result<Self> {
        let zero = vec![LogicalInput::real(1.0, 0.0)?; c.k()];
        let dense = match backend {
            SopBackend::Statevector => true,
            SopBackend::Stabilizer => false,
            SopBackend::Auto => c.num_sites <= DENSE_SOP_SITES || !c.is_clifford(),
        };
        if dense {
            let mut sv = StateVector::init_product_state(&c.initial, &zero)?;
            sv.apply_circuit(&c.circuit)?;
            Ok(Resource::Dense(sv))
        } else {
            if !c.is_clifford() {
                return Err(Error::Unsupported("stabilizer evaluation of a non-Clifford resource".into()));
            }
            Ok(Resource::Frame { c, logical: zero })
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Resource::Dense(_) => "statevector",
            Resource::Frame { .. } => "stabilizer",
        }
    }

    pub fn expectation_pauli(&self, p: &PauliString) -> Result<C64> {
        match self {
            Resource::Dense(sv) => sv.expectation_pauli(p),
            Resource::Frame { c, logical } => Ok(c.initial.expectation(&c.circuit.heisenberg(p)?, logical)),
        }
    }

    pub fn evaluate(&self, s: &Sop) -> Result<C64> {
        if s.dense.is_empty() {
            return self.expectation_pauli(&s.pauli);
        }
        match self {
            Resource::Dense(sv) => sv.expectation_product(&s.dense, &s.pauli),
            Resource::Frame { .. } => Err(Error::Unsupported("dense endpoints need the statevector backend".into())),
        }
    }
}

/// Everything needed to write down the interval strings of a Clifford protocol.
pub struct CliffordSops {
    pub map: AttachmentMap,
    pub seg: Segmentation,
    /// `one_sided[col][s]` = `S_{t,s}` for `s = 0..=R+1`.
    pub one_sided: Vec<Vec<PauliString>>,
    /// `U Σ_s U†` per column and boundary.
    pub forward_sigma: Vec<Vec<PauliString>>,
    /// Product of attached observables per column and region.
    pub region_bulk: Vec<Vec<PauliString>>,
    pub final_pauli: Vec<PauliString>,
}

impl CliffordSops {
    pub fn build(c: &CanonicalProtocol) -> Result<Self> {
        let map = attachment_map(c)?;
        let seg = segment_regions(c, &map)?;
        let obs = c.pauli_observables().expect("checked by segmentation");
        let n = c.num_sites;
        let k = c.k();
        let r = seg.regions.len();
        let mut one_sided = Vec::new();
        let mut forward_sigma = Vec::new();
        let mut region_bulk = Vec::new();
        let mut final_pauli = Vec::new();
        for slot in 1..=k {
            for axis in AXES {
                let cc = col(slot, axis);
                let pf = PauliString::single(n, c.logical_out[slot - 1], axis.pauli());
                let bulk: Vec<PauliString> = seg
                    .regions
                    .iter()
                    .map(|reg| {
                        let mut b = PauliString::identity(n);
                        for &j in reg {
                            if map.attached(j, slot, axis) {
                                b.mul_right(&obs[j]);
                            }
                        }
                        b
                    })
                    .collect();
                // suffix[s] = Ā_{s+1..R} · P_f
                let mut suffix = vec![pf.clone(); r + 1];
                for s in (0..r).rev() {
                    let mut v = bulk[s].clone();
                    v.mul_right(&suffix[s + 1]);
                    suffix[s] = v;
                }
                let fwd: Vec<PauliString> =
                    (0..=r).map(|s| c.circuit.schrodinger(&seg.sigma[s][cc])).collect::<std::result::Result<_, _>>()?;
                let mut row: Vec<PauliString> = (0..=r)
                    .map(|s| {
                        let mut v = fwd[s].clone();
                        v.mul_right(&suffix[s]);
                        v
                    })
                    .collect();
                row.push(PauliString::identity(n));
                one_sided.push(row);
                forward_sigma.push(fwd);
                region_bulk.push(bulk);
                final_pauli.push(pf);
            }
        }
        Ok(CliffordSops { map, seg, one_sided, forward_sigma, region_bulk, final_pauli })
    }

    pub fn num_regions(&self) -> usize {
        self.seg.regions.len()
    }

    /// `S_{a,b} = S_{t,a} · S_{t,b}†` with its endpoint/bulk decomposition.
    pub fn interval(&self, slot: usize, axis: Axis, a: usize, b: usize) -> Sop {
        let cc = col(slot, axis);
        let r = self.num_regions();
        let mut op = self.one_sided[cc][a].clone();
        op.mul_right(&self.one_sided[cc][b].adjoint());
        let n = op.num_sites();
        let mut left = self.forward_sigma[cc][a].clone();
        let mut first_bulk = a + 1;
        if a == 0 && b > 0 && r > 0 {
            // At the initial edge, region 1's observables merge into the endpoint.
            left.mul_right(&self.region_bulk[cc][0]);
            first_bulk = 2;
        }
        let mut bulk = PauliString::identity(n);
        for s in first_bulk..=b.min(r) {
            bulk.mul_right(&self.region_bulk[cc][s - 1]);
        }
        let right = if b == r + 1 { self.final_pauli[cc].clone() } else { self.forward_sigma[cc][b].adjoint() };
        Sop {
            slot,
            axis,
            interval: (a, b),
            left: left.to_sparse(),
            bulk: bulk.to_sparse(),
            right: right.to_sparse(),
            pauli: op,
            dense: Vec::new(),
        }
    }

    pub fn end_to_end(&self, slot: usize, axis: Axis) -> Sop {
        self.interval(slot, axis, 0, self.num_regions() + 1)
    }

    /// `U_I(ν) = ∏ Ā` over all observables attached to `(slot, ν)`.
    pub fn generator(&self, slot: usize, axis: Axis) -> PauliString {
        let cc = col(slot, axis);
        let mut g = PauliString::identity(self.final_pauli[cc].num_sites());
        for b in &self.region_bulk[cc] {
            g.mul_right(b);
        }
        g
    }
}

/// Bulk observables of every axis and slot commute pairwise.
fn bulk_commutes(c: &CanonicalProtocol, map: &AttachmentMap) -> (bool, Vec<String>) {
    let mut by_site: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (j, m) in c.measurements.iter().enumerate() {
        if map.is_attached(j) {
            for s in m.observable.support() {
                by_site.entry(s).or_default().push(j);
            }
        }
    }
    let mut bad = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for list in by_site.values() {
        for (x, &a) in list.iter().enumerate() {
            for &b in &list[x + 1..] {
                if seen.insert((a, b)) && !c.measurements[a].observable.commutes_with(&c.measurements[b].observable) {
                    bad.push(format!("{} / {}", c.measurements[a].id, c.measurements[b].id));
                }
            }
        }
    }
    (bad.is_empty(), bad)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SopRecord {
    pub slot: usize,
    pub axis: &'static str,
    pub interval: (usize, usize),
    pub left: String,
    pub bulk: String,
    pub right: String,
    pub operator: String,
    pub expectation: f64,
    pub imaginary: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntervalSummary {
    pub slot: usize,
    pub axis: &'static str,
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EndpointRecord {
    pub slot: usize,
    pub boundary: usize,
    pub x: String,
    pub z: String,
    pub anticommute: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneratorRecord {
    pub slot: usize,
    pub axis: &'static str,
    pub operator: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SptCertificate {
    pub protocol: String,
    pub symmetry: String,
    pub backend: String,
    pub region_count: usize,
    pub regions: Vec<Vec<String>>,
    pub end_to_end: Vec<SopRecord>,
    pub intervals: Vec<SopRecord>,
    pub interval_summary: Vec<IntervalSummary>,
    pub endpoints: Vec<EndpointRecord>,
    pub bulk_commutation: bool,
    pub endpoint_anticommutation: bool,
    pub generators: Vec<GeneratorRecord>,
    pub unnecessary: Vec<String>,
    pub warnings: Vec<String>,
    pub note: String,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct CertifyOptions {
    pub backend: SopBackend,
    pub tolerance: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { backend: SopBackend::Auto, tolerance: SOP_TOL }
    }
}

fn record(s: &Sop, e: C64, tol: f64) -> SopRecord {
    SopRecord {
        slot: s.slot,
        axis: s.axis.name(),
        interval: s.interval,
        left: s.left.clone(),
        bulk: s.bulk.clone(),
        right: s.right.clone(),
        operator: s.operator_text(),
        expectation: e.re,
        imaginary: e.im,
        pass: (e.re - 1.0).abs() <= tol && e.im.abs() <= tol,
    }
}

const FINITE_N_NOTE: &str =
    "finite chain: string order is certified on this N; persistence with length is checked by family sweeps";

pub fn certify_spt(p: &Protocol, opts: CertifyOptions) -> Result<SptCertificate> {
    let c = canonicalize(p)?;
    if let Some(closed) = crate::builtins::closed_form_sops(p) {
        return certify_declared(p, &c, closed, opts);
    }
    certify_clifford(&c, opts)
}

fn certify_clifford(c: &CanonicalProtocol, opts: CertifyOptions) -> Result<SptCertificate> {
    let sops = CliffordSops::build(c)?;
    let res = Resource::new(c, opts.backend)?;
    let tol = opts.tolerance;
    let k = c.k();
    let r = sops.num_regions();
    let mut end_to_end = Vec::new();
    let mut intervals = Vec::new();
    let mut interval_summary = Vec::new();
    let mut generators = Vec::new();
    for slot in 1..=k {
        for axis in AXES {
            let e2e = sops.end_to_end(slot, axis);
            end_to_end.push(record(&e2e, res.evaluate(&e2e)?, tol));
            generators.push(GeneratorRecord {
                slot,
                axis: axis.name(),
                operator: sops.generator(slot, axis).to_sparse(),
            });
            let mut summary = IntervalSummary {
                slot,
                axis: axis.name(),
                count: 0,
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
                pass: true,
            };
            if r + 2 <= MAX_LISTED_ENDPOINTS {
                for a in 0..=r {
                    for b in a + 1..=r + 1 {
                        let s = sops.interval(slot, axis, a, b);
                        let rec = record(&s, res.evaluate(&s)?, tol);
                        summary.count += 1;
                        summary.min = summary.min.min(rec.expectation);
                        summary.max = summary.max.max(rec.expectation);
                        summary.pass &= rec.pass;
                        intervals.push(rec);
                    }
                }
            } else {
                // Each S_{t,s} with value ±1 is a stabilizer element, so
                // ⟨S_{t,a} S_{t,b}†⟩ = ⟨S_{t,a}⟩⟨S_{t,b}⟩.
                let cc = col(slot, axis);
                let values: Vec<C64> =
                    sops.one_sided[cc].iter().map(|s| res.expectation_pauli(s)).collect::<Result<_>>()?;
                let definite = values.iter().all(|v| (v.norm() - 1.0).abs() <= tol);
                let ones = values.iter().filter(|v| (v.re - 1.0).abs() <= tol).count();
                let all = values.len();
                summary.count = all * (all - 1) / 2;
                if definite {
                    let minus = all - ones;
                    // Products of two values: −1 appears iff exactly one factor is −1.
                    let has_minus = ones > 0 && minus > 0;
                    let has_plus = ones >= 2 || minus >= 2;
                    summary.min = if has_minus { -1.0 } else { 1.0 };
                    summary.max = if has_plus { 1.0 } else { -1.0 };
                    summary.pass = !has_minus;
                } else {
                    summary.min = 0.0;
                    summary.max = 1.0;
                    summary.pass = false;
                }
            }
            interval_summary.push(summary);
        }
    }
    let mut endpoints = Vec::new();
    let mut anticommute_ok = true;
    for slot in 1..=k {
        for s in 0..=r {
            let x = &sops.seg.sigma[s][col(slot, Axis::X)];
            let z = &sops.seg.sigma[s][col(slot, Axis::Z)];
            let anti = !x.commutes_with(z);
            anticommute_ok &= anti;
            endpoints.push(EndpointRecord { slot, boundary: s, x: x.to_sparse(), z: z.to_sparse(), anticommute: anti });
        }
    }
    // Endpoints of different (slot, boundary) commute.
    for s in 0..=r {
        for t in 0..=r {
            for a in 0..2 * k {
                for b in 0..2 * k {
                    if a / 2 == b / 2 && s == t {
                        continue;
                    }
                    if (s, a) < (t, b) && !sops.seg.sigma[s][a].commutes_with(&sops.seg.sigma[t][b]) {
                        anticommute_ok = false;
                    }
                }
            }
        }
        if r > MAX_LISTED_ENDPOINTS {
            break;
        }
    }
    let (bulk_ok, bad) = bulk_commutes(c, &sops.map);
    let mut warnings = sops.map.warnings.clone();
    warnings.extend(bad.into_iter().map(|p| format!("bulk observables {p} do not commute")));
    let regions =
        sops.seg.regions.iter().map(|reg| reg.iter().map(|&j| c.measurements[j].id.clone()).collect()).collect();
    let pass =
        bulk_ok && anticommute_ok && end_to_end.iter().all(|r| r.pass) && interval_summary.iter().all(|s| s.pass);
    Ok(SptCertificate {
        protocol: c.name.clone(),
        symmetry: symmetry_label(k),
        backend: res.name().to_string(),
        region_count: r,
        regions,
        end_to_end,
        intervals,
        interval_summary,
        endpoints,
        bulk_commutation: bulk_ok,
        endpoint_anticommutation: anticommute_ok,
        generators,
        unnecessary: sops.map.unnecessary.clone(),
        warnings,
        note: FINITE_N_NOTE.to_string(),
        pass,
    })
}

fn symmetry_label(k: usize) -> String {
    if k == 1 {
        "Z2xZ2".to_string()
    } else {
        format!("(Z2xZ2)^{k}")
    }
}

/// String order supplied in closed form by a generator (non-Clifford resources).
pub struct DeclaredSops {
    pub regions: Vec<Vec<String>>,
    pub sops: Vec<Sop>,
    /// Left and right endpoint operators per `(slot, boundary)`, as `(x, z)` pairs.
    pub endpoints: Vec<(usize, usize, DenseOperator, DenseOperator)>,
    pub generators: Vec<(usize, Axis, PauliString)>,
}

fn certify_declared(
    p: &Protocol,
    c: &CanonicalProtocol,
    d: DeclaredSops,
    opts: CertifyOptions,
) -> Result<SptCertificate> {
    let res = Resource::new(c, SopBackend::Statevector)?;
    let tol = opts.tolerance;
    let map = attachment_map(c)?;
    let r = d.regions.len();
    let mut end_to_end = Vec::new();
    let mut intervals = Vec::new();
    let mut summary: BTreeMap<(usize, &'static str), IntervalSummary> = BTreeMap::new();
    for s in &d.sops {
        let rec = record(s, res.evaluate(s)?, tol);
        let e = summary.entry((s.slot, s.axis.name())).or_insert(IntervalSummary {
            slot: s.slot,
            axis: s.axis.name(),
            count: 0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            pass: true,
        });
        e.count += 1;
        e.min = e.min.min(rec.expectation);
        e.max = e.max.max(rec.expectation);
        e.pass &= rec.pass;
        if s.interval.0 == 0 && s.interval.1 == r {
            end_to_end.push(rec.clone());
        }
        intervals.push(rec);
    }
    let mut endpoints = Vec::new();
    let mut anticommute_ok = true;
    for (slot, boundary, x, z) in &d.endpoints {
        let anti = x.commutation(z, 1e-12) == Some(false);
        anticommute_ok &= anti;
        endpoints.push(EndpointRecord {
            slot: *slot,
            boundary: *boundary,
            x: describe(x),
            z: describe(z),
            anticommute: anti,
        });
    }
    let (bulk_ok, bad) = bulk_commutes(c, &map);
    let mut warnings = map.warnings.clone();
    warnings.extend(bad.into_iter().map(|p| format!("bulk observables {p} do not commute")));
    let interval_summary: Vec<IntervalSummary> = summary.into_values().collect();
    let pass = bulk_ok && anticommute_ok && !end_to_end.is_empty() && interval_summary.iter().all(|s| s.pass);
    Ok(SptCertificate {
        protocol: p.name.clone(),
        symmetry: symmetry_label(p.k()),
        backend: res.name().to_string(),
        region_count: r,
        regions: d.regions,
        end_to_end,
        intervals,
        interval_summary,
        endpoints,
        bulk_commutation: bulk_ok,
        endpoint_anticommutation: anticommute_ok,
        generators: d
            .generators
            .iter()
            .map(|(slot, a, g)| GeneratorRecord { slot: *slot, axis: a.name(), operator: g.to_sparse() })
            .collect(),
        unnecessary: map.unnecessary.clone(),
        warnings,
        note: format!("{FINITE_N_NOTE}; regions and endpoints declared by the generator"),
        pass,
    })
}

fn describe(d: &DenseOperator) -> String {
    let sites: Vec<String> = d.sites().iter().map(|s| s.to_string()).collect();
    format!("dense[{}]", sites.join(","))
}

/// `Ā` of every measurement as the product of Paulis, helper for generators.
pub fn product_of(n: usize, factors: impl IntoIterator<Item = (usize, Pauli)>) -> PauliString {
    let mut p = PauliString::identity(n);
    for (s, q) in factors {
        p.mul_right(&PauliString::single(n, s, q));
    }
    p.with_phase(Phase::ONE)
}
