//! Generators for the shipped protocol families.

use crate::dense::DenseOperator;
use crate::error::{Error, Result};
use crate::gate::Gate;
use crate::pauli::{Pauli, PauliString};
use crate::product::{ProductState, SiteLabel};
use crate::protocol::{Instruction, Measurement, Protocol, Recovery};
use crate::stabilizer::Axis;
use crate::stringorder::{DeclaredSops, Sop};

/// Incremental protocol assembly used by all generators.
struct Builder {
    name: String,
    n: usize,
    logical_in: Vec<usize>,
    logical_out: Vec<usize>,
    labels: Vec<SiteLabel>,
    instructions: Vec<Instruction>,
    t: usize,
}

impl Builder {
    fn new(name: String, n: usize, fill: SiteLabel) -> Self {
        Builder {
            name,
            n,
            logical_in: Vec::new(),
            logical_out: Vec::new(),
            labels: vec![fill; n],
            instructions: Vec::new(),
            t: 0,
        }
    }

    fn logical(&mut self, i: usize, f: usize) {
        self.logical_in.push(i);
        self.logical_out.push(f);
        self.labels[i - 1] = SiteLabel::Logical(self.logical_in.len());
    }

    fn label(&mut self, site: usize, l: SiteLabel) {
        self.labels[site - 1] = l;
    }

    fn layer(&mut self, gates: Vec<Gate>) {
        if gates.is_empty() {
            return;
        }
        self.t += 1;
        self.instructions.push(Instruction::Layer { t: self.t, gates });
    }

    fn measure(&mut self, site: usize, p: Pauli) -> String {
        let id = format!("m{site}");
        self.instructions.push(Instruction::Measure(Measurement::pauli(id.clone(), site, p)));
        id
    }

    fn recover(&mut self, site: usize, p: Pauli, parity_of: Vec<String>) {
        if parity_of.is_empty() {
            return;
        }
        let pauli = PauliString::single(self.n, site, p);
        self.instructions.push(Instruction::Recover(Recovery { pauli, parity_of }));
    }

    fn build(self, coords: Option<Vec<f64>>) -> Result<Protocol> {
        let p = Protocol {
            name: self.name,
            num_sites: self.n,
            logical_in: self.logical_in,
            logical_out: self.logical_out,
            initial: ProductState::new(self.labels)?,
            instructions: self.instructions,
            declared: None,
            coords,
        };
        p.check_structure()?;
        Ok(p)
    }
}

fn param(msg: String) -> Error {
    Error::Usage(msg)
}

/// Nearest-neighbour CZ chain on `sites` as two layers (odd bonds, then even bonds).
fn cz_chain(first: usize, last: usize) -> [Vec<Gate>; 2] {
    let odd = (first..last).step_by(2).map(|j| Gate::cz(j, j + 1)).collect();
    let even = (first + 1..last).step_by(2).map(|j| Gate::cz(j, j + 1)).collect();
    [odd, even]
}

/// X-basis cluster-state teleportation from site 1 to site `n` (odd `n ≥ 3`).
pub fn cluster_x(n: usize) -> Result<Protocol> {
    if n < 3 || n % 2 == 0 {
        return Err(param(format!("cluster_x needs odd N >= 3, got {n}")));
    }
    let mut b = Builder::new(format!("cluster_x_{n}"), n, SiteLabel::Plus);
    b.logical(1, n);
    for l in cz_chain(1, n) {
        b.layer(l);
    }
    let ids: Vec<String> = (1..n).map(|j| b.measure(j, Pauli::X)).collect();
    let odd = ids.iter().step_by(2).cloned().collect();
    let even = ids.iter().skip(1).step_by(2).cloned().collect();
    b.recover(n, Pauli::Z, odd);
    b.recover(n, Pauli::X, even);
    b.build(None)
}

/// Y-basis measurements on the same cluster state, `N = 3R + 1`.
pub fn cluster_y(r: usize) -> Result<Protocol> {
    if r == 0 {
        return Err(param("cluster_y needs R >= 1".into()));
    }
    let n = 3 * r + 1;
    let mut b = Builder::new(format!("cluster_y_{r}"), n, SiteLabel::Plus);
    b.logical(1, n);
    for l in cz_chain(1, n) {
        b.layer(l);
    }
    let ids: Vec<String> = (1..n).map(|j| b.measure(j, Pauli::Y)).collect();
    // Outcome parities on sites {3i+1, 3i+2} fix the X logical, {3i+2, 3i+3} the Z logical.
    let pick = |offsets: [usize; 2]| -> Vec<String> {
        (0..r).flat_map(|i| offsets.map(|o| ids[3 * i + o - 1].clone())).collect()
    };
    b.recover(n, Pauli::Z, pick([1, 2]));
    b.recover(n, Pauli::X, pick([2, 3]));
    b.build(None)
}

/// Bell-pair chains teleporting `k` qubits over `R` measurement regions;
/// `N = (2R + 3)k`, depth `k + 1`, nearest-neighbour gates only.
pub fn valence_bond(k: usize, r: usize) -> Result<Protocol> {
    if k == 0 || r == 0 {
        return Err(param(format!("valence_bond needs k, R >= 1, got ({k}, {r})")));
    }
    let n = (2 * r + 3) * k;
    let mut b = Builder::new(format!("valence_bond_{k}_{r}"), n, SiteLabel::Zero);
    for slot in 1..=k {
        b.logical(2 * slot - 1, n - 2 * k + 2 * slot);
    }
    let in_range = |g: &Gate| g.sites.iter().all(|&s| s <= n);
    // U_0: shift each logical one site right; Bell-encode the bulk pairs.
    let mut u0: Vec<Gate> = (1..=k).map(|j| Gate::swap(2 * j - 1, 2 * j)).collect();
    u0.extend((k + 1..=(r + 1) * k).map(|j| Gate::bell(2 * j - 1, 2 * j)));
    b.layer(u0);
    // U_p: staggered SWAP layers, starting on even bonds.
    for p in 1..k {
        let off = if p % 2 == 1 { 2 * p - 2 } else { 2 * p - 3 };
        let layer: Vec<Gate> =
            (1..=(r + 1) * k).map(|j| Gate::swap(2 * j + off, 2 * j + off + 1)).filter(in_range).collect();
        b.layer(layer);
    }
    // U_k: Bell-decode the measured pairs, swap the right edge.
    let mut uk: Vec<Gate> = (1..=k * r).map(|j| Gate::bell_dg(k + 2 * j - 1, k + 2 * j)).collect();
    uk.extend((0..k).map(|m| Gate::swap(n - 2 * m - 1, n - 2 * m)));
    b.layer(uk);
    let ids: Vec<String> = (k + 1..=(2 * r + 1) * k).map(|j| b.measure(j, Pauli::Z)).collect();
    for slot in 1..=k {
        let f = n - 2 * k + 2 * slot;
        // Region s holds (m_x1, m_z1, …, m_xk, m_zk).
        let xs = (0..r).map(|s| ids[2 * k * s + 2 * (slot - 1)].clone()).collect();
        let zs = (0..r).map(|s| ids[2 * k * s + 2 * (slot - 1) + 1].clone()).collect();
        b.recover(f, Pauli::Z, xs);
        b.recover(f, Pauli::X, zs);
    }
    b.build(None)
}

/// `k`-fold cluster chain: `(∏CZ ∏H)^k` on `|y−⟩`, logicals on sites `1..=k`,
/// outputs on the last `k` sites, Y measurements on everything else.
///
/// Boundary: the output sites start in `|+⟩` and skip the first Hadamard
/// round, and the inputs get an `S` after the last round. `N = 2k(R + 1)`.
pub fn kfold_cluster(k: usize, r: usize) -> Result<Protocol> {
    if !(1..=2).contains(&k) {
        return Err(Error::Unsupported(format!(
            "kfold_cluster boundaries exist for k <= 2 only (got k = {k}); use valence_bond"
        )));
    }
    if r == 0 {
        return Err(param("kfold_cluster needs R >= 1".into()));
    }
    let n = 2 * k * (r + 1);
    let mut b = Builder::new(format!("kfold_cluster_{k}_{r}"), n, SiteLabel::YMinus);
    for slot in 1..=k {
        b.logical(slot, n - k + slot);
        b.label(n - k + slot, SiteLabel::Plus);
    }
    for round in 0..k {
        let skip = if round == 0 { n - k } else { n };
        b.layer((1..=skip).map(Gate::h).collect());
        for l in cz_chain(1, n) {
            b.layer(l);
        }
    }
    b.layer((1..=k).map(Gate::s).collect());
    let ids: Vec<String> = (1..=n - k).map(|j| b.measure(j, Pauli::Y)).collect();
    let pick = |sites: Vec<usize>| -> Vec<String> { sites.into_iter().map(|s| ids[s - 1].clone()).collect() };
    let per_region =
        |offsets: &[usize]| -> Vec<usize> { (0..r).flat_map(|s| offsets.iter().map(move |o| 2 * k * s + o)).collect() };
    if k == 1 {
        b.recover(n, Pauli::Z, pick(per_region(&[2])));
        b.recover(n, Pauli::X, pick([vec![1], per_region(&[3])].concat()));
    } else {
        let (f1, f2) = (n - 1, n);
        b.recover(f1, Pauli::Z, pick([vec![1], per_region(&[3, 4, 5])].concat()));
        b.recover(f1, Pauli::X, pick([vec![2], per_region(&[4, 5, 6])].concat()));
        b.recover(f2, Pauli::Z, pick(per_region(&[4])));
        b.recover(f2, Pauli::X, pick([vec![1], per_region(&[5])].concat()));
    }
    b.build(None)
}

/// Layers of pairwise-disjoint gates, filled greedily in order.
fn schedule(gates: Vec<Gate>) -> Vec<Vec<Gate>> {
    let mut layers: Vec<Vec<Gate>> = Vec::new();
    for g in gates {
        let free = layers.iter().position(|l| l.iter().all(|h| h.sites.iter().all(|s| !g.sites.contains(s))));
        match free {
            Some(i) => layers[i].push(g),
            None => layers.push(vec![g]),
        }
    }
    layers
}

/// Spine site `s_t` and shaded face `Δ_t` of the tetrahedral chain.
fn spine(t: usize) -> usize {
    4 * t + 1
}

fn face(t: usize) -> [usize; 3] {
    [4 * t - 2, 4 * t - 1, 4 * t]
}

/// Hypergraph state on a chain of `n_tet` tetrahedron pairs, `N = 4 n_tet + 1`.
/// Every unshaded face carries a CCZ; all sites but the last are measured in X.
pub fn hypergraph(n_tet: usize) -> Result<Protocol> {
    if n_tet == 0 {
        return Err(param("hypergraph needs n_tet >= 1".into()));
    }
    let n = 4 * n_tet + 1;
    let mut b = Builder::new(format!("hypergraph_{n_tet}"), n, SiteLabel::Plus);
    b.logical(1, n);
    let mut gates = Vec::new();
    for t in 1..=n_tet {
        let [p, q, r] = face(t);
        for apex in [spine(t - 1), spine(t)] {
            for (u, v) in [(p, q), (q, r), (p, r)] {
                gates.push(Gate::ccz(apex, u, v));
            }
        }
    }
    for l in schedule(gates) {
        b.layer(l);
    }
    let mut spine_ids = Vec::new();
    let mut face_ids = Vec::new();
    for t in 1..=n_tet {
        spine_ids.push(b.measure(spine(t - 1), Pauli::X));
        face_ids.extend(face(t).map(|s| b.measure(s, Pauli::X)));
    }
    b.recover(n, Pauli::X, face_ids);
    b.recover(n, Pauli::Z, spine_ids);
    let coords =
        (1..=n).map(|s| if s % 4 == 1 { ((s - 1) / 2) as f64 } else { (2 * ((s + 2) / 4) - 1) as f64 }).collect();
    b.build(Some(coords))
}

fn hypergraph_size(p: &Protocol) -> Option<usize> {
    let n_tet: usize = p.name.strip_prefix("hypergraph_")?.parse().ok()?;
    (n_tet >= 1 && p.num_sites == 4 * n_tet + 1 && hypergraph(n_tet).ok()? == *p).then_some(n_tet)
}

fn cz_face(t: usize) -> DenseOperator {
    let [p, q, r] = face(t);
    DenseOperator::cz_triangle(p, q, r)
}

fn sites_text(p: Pauli, sites: &[usize]) -> String {
    if sites.is_empty() {
        return "I".into();
    }
    sites.iter().map(|s| format!("{}{s}", p.symbol())).collect::<Vec<_>>().join(" ")
}

/// Closed-form string order of a generated hypergraph protocol; `None` for
/// anything else.
pub fn closed_form_sops(p: &Protocol) -> Option<DeclaredSops> {
    let n_tet = hypergraph_size(p)?;
    let n = p.num_sites;
    let xs = |sites: &[usize], q: Pauli| {
        let mut s = PauliString::identity(n);
        for &j in sites {
            s.mul_right(&PauliString::single(n, j, q));
        }
        s
    };
    let mut sops = Vec::new();
    for a in 0..n_tet {
        for b in a + 1..=n_tet {
            // x: CZ_{Δ_{a+1}} · X_{s_{a+1}} … X_{s_b} · CZ_{Δ_{b+1}}
            let bulk: Vec<usize> = (a + 1..b).map(spine).collect();
            let mut dense = vec![cz_face(a + 1)];
            let right = if b < n_tet {
                dense.push(cz_face(b + 1));
                format!("X{} CZ{:?}", spine(b), face(b + 1))
            } else {
                format!("X{}", spine(b))
            };
            let mut all = bulk.clone();
            all.push(spine(b));
            sops.push(Sop {
                slot: 1,
                axis: Axis::X,
                interval: (a, b),
                left: format!("CZ{:?}", face(a + 1)),
                bulk: sites_text(Pauli::X, &bulk),
                right,
                pauli: xs(&all, Pauli::X),
                dense,
            });
            // z: Z_{s_a} X_{Δ_{a+1}} · X_{Δ_{a+2..b}} · Z_{s_b}
            let left_faces = face(a + 1).to_vec();
            let bulk: Vec<usize> = (a + 2..=b).flat_map(face).collect();
            let mut pauli = xs(&[spine(a), spine(b)], Pauli::Z);
            pauli.mul_right(&xs(&left_faces, Pauli::X));
            pauli.mul_right(&xs(&bulk, Pauli::X));
            sops.push(Sop {
                slot: 1,
                axis: Axis::Z,
                interval: (a, b),
                left: format!("Z{} {}", spine(a), sites_text(Pauli::X, &left_faces)),
                bulk: sites_text(Pauli::X, &bulk),
                right: format!("Z{}", spine(b)),
                pauli,
                dense: Vec::new(),
            });
        }
    }
    let mut endpoints = Vec::new();
    for a in 0..n_tet {
        let z = DenseOperator::pauli(spine(a), Pauli::Z);
        let z = face(a + 1).iter().fold(z, |acc, &s| acc.mul(&DenseOperator::pauli(s, Pauli::X)));
        endpoints.push((1, a, cz_face(a + 1), z));
    }
    for b in 1..=n_tet {
        let mut x = DenseOperator::pauli(spine(b), Pauli::X);
        if b < n_tet {
            x = x.mul(&cz_face(b + 1));
        }
        endpoints.push((1, b, x, DenseOperator::pauli(spine(b), Pauli::Z)));
    }
    let regions =
        (1..=n_tet).map(|t| std::iter::once(spine(t - 1)).chain(face(t)).map(|s| format!("m{s}")).collect()).collect();
    let spine_sites: Vec<usize> = (0..n_tet).map(spine).collect();
    let face_sites: Vec<usize> = (1..=n_tet).flat_map(face).collect();
    Some(DeclaredSops {
        regions,
        sops,
        endpoints,
        generators: vec![(1, Axis::X, xs(&spine_sites, Pauli::X)), (1, Axis::Z, xs(&face_sites, Pauli::X))],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_shapes() {
        let p = cluster_x(5).unwrap();
        assert_eq!(p.num_measurements(), 4);
        assert_eq!(p.recoveries().count(), 2);
        assert!(cluster_x(4).is_err());
        assert_eq!(cluster_y(2).unwrap().num_sites, 7);
        assert_eq!(cluster_y(1).unwrap().num_sites, 4);
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(cluster_x(7).unwrap().to_json_string(), cluster_x(7).unwrap().to_json_string());
        assert_eq!(valence_bond(2, 2).unwrap().to_json_string(), valence_bond(2, 2).unwrap().to_json_string());
    }

    #[test]
    fn hypergraph_geometry() {
        let p = hypergraph(4).unwrap();
        assert_eq!(p.num_sites, 17);
        assert_eq!(p.num_measurements(), 16);
        assert_eq!(p.distance(1, 17), 8.0);
        let dv = p.depth_velocity();
        assert_eq!(dv.v, 1.0);
        assert!(closed_form_sops(&p).is_some());
        let mut q = p.clone();
        q.name = "hypergraph_3".into();
        assert!(closed_form_sops(&q).is_none());
    }

    #[test]
    fn kfold_shapes() {
        assert!(matches!(kfold_cluster(3, 1), Err(Error::Unsupported(_))));
        let p = kfold_cluster(2, 1).unwrap();
        assert_eq!(p.num_sites, 8);
        assert_eq!(p.num_measurements(), 6);
        assert_eq!(p.logical_out, vec![7, 8]);
        assert_eq!(kfold_cluster(1, 3).unwrap().num_sites, 8);
    }

    #[test]
    fn valence_bond_shapes() {
        for k in 1..=3 {
            for r in 1..=4 {
                let p = valence_bond(k, r).unwrap();
                assert_eq!(p.num_sites, (2 * r + 3) * k);
                assert_eq!(p.num_measurements(), 2 * k * r);
                assert_eq!(p.depth_velocity().t, k + 1);
                assert_eq!(p.depth_velocity().v, 1.0);
            }
        }
    }
}
