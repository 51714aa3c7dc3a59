//! Protocol IR, the JSON document format, structural validation and the
//! canonical `R·M·U` rewrite.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::gate::{Circuit, Gate, GateKind};
use crate::observable::{hermitian_from_bloch, involutory_part, InvolutoryObservable, Observable};
use crate::pauli::{parse_pauli, Pauli, PauliString};
use crate::product::{ProductState, SiteLabel};

/// How an observable was written in the source document.
#[derive(Clone, Debug, PartialEq)]
pub enum ObsSpec {
    Pauli(Pauli),
    Bloch { bloch: [f64; 3], trace: f64, gap: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub id: String,
    pub observable: InvolutoryObservable,
    pub source: ObsSpec,
}

impl Measurement {
    pub fn pauli(id: impl Into<String>, site: usize, p: Pauli) -> Self {
        Measurement { id: id.into(), observable: InvolutoryObservable::pauli(site, p), source: ObsSpec::Pauli(p) }
    }

    pub fn site(&self) -> usize {
        self.observable.site
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Recovery {
    /// Full-chain Pauli string applied when the parity is odd.
    pub pauli: PauliString,
    pub parity_of: Vec<String>,
}

impl Recovery {
    /// Ids with odd multiplicity in the parity list.
    pub fn parity_set(&self) -> BTreeSet<String> {
        let mut set = BTreeSet::new();
        for id in &self.parity_of {
            if !set.remove(id) {
                set.insert(id.clone());
            }
        }
        set
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Instruction {
    Layer { t: usize, gates: Vec<Gate> },
    Measure(Measurement),
    Recover(Recovery),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Protocol {
    pub name: String,
    pub num_sites: usize,
    pub logical_in: Vec<usize>,
    pub logical_out: Vec<usize>,
    pub initial: ProductState,
    pub instructions: Vec<Instruction>,
    pub declared: Option<(usize, usize)>,
    pub coords: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
pub struct Violation {
    pub code: &'static str,
    pub message: String,
}

impl Violation {
    pub(crate) fn new(code: &'static str, message: impl Into<String>) -> Self {
        Violation { code, message: message.into() }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl Protocol {
    pub fn k(&self) -> usize {
        self.logical_in.len()
    }

    pub fn measurements(&self) -> impl Iterator<Item = &Measurement> {
        self.instructions.iter().filter_map(|i| if let Instruction::Measure(m) = i { Some(m) } else { None })
    }

    pub fn recoveries(&self) -> impl Iterator<Item = &Recovery> {
        self.instructions.iter().filter_map(|i| if let Instruction::Recover(r) = i { Some(r) } else { None })
    }

    pub fn num_measurements(&self) -> usize {
        self.measurements().count()
    }

    pub fn gates(&self) -> impl Iterator<Item = &Gate> {
        self.instructions
            .iter()
            .filter_map(|i| if let Instruction::Layer { gates, .. } = i { Some(gates.iter()) } else { None })
            .flatten()
    }

    pub fn is_clifford(&self) -> bool {
        self.gates().all(|g| g.kind.is_clifford())
    }

    /// Distance between two sites: declared coordinates if present, else `|a−b|`.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        match &self.coords {
            Some(c) => (c[a - 1] - c[b - 1]).abs(),
            None => (a as f64 - b as f64).abs(),
        }
    }

    /// Structural checks every well-formed protocol satisfies: ranges, slot
    /// labels, unique ids, parity references to earlier measurements and
    /// disjoint gates within a layer.
    pub fn check_structure(&self) -> Result<()> {
        let n = self.num_sites;
        let bad = |m: String| Err(Error::Protocol(m));
        if n == 0 {
            return bad("num_sites must be positive".into());
        }
        if self.initial.num_sites() != n {
            return bad(format!("initial state covers {} of {n} sites", self.initial.num_sites()));
        }
        let k = self.logical_in.len();
        if k == 0 || self.logical_out.len() != k {
            return bad(format!("logical_in has {k} sites and logical_out {}", self.logical_out.len()));
        }
        if self.initial.num_logical() != k {
            return bad(format!("initial state has {} logical slots, expected {k}", self.initial.num_logical()));
        }
        for (idx, (&i, &f)) in self.logical_in.iter().zip(&self.logical_out).enumerate() {
            for s in [i, f] {
                if s == 0 || s > n {
                    return Err(Error::SiteRange { site: s, num_sites: n });
                }
            }
            if self.initial.label(i) != SiteLabel::Logical(idx + 1) {
                return bad(format!("site {i} must carry logical:{}", idx + 1));
            }
        }
        let distinct = |v: &[usize]| v.iter().collect::<BTreeSet<_>>().len() == v.len();
        if !distinct(&self.logical_in) || !distinct(&self.logical_out) {
            return bad("logical sites must be distinct".into());
        }
        if let Some(c) = &self.coords {
            if c.len() != n {
                return bad(format!("coords has {} entries for {n} sites", c.len()));
            }
        }
        let mut seen = BTreeSet::new();
        let mut last_t: Option<usize> = None;
        for ins in &self.instructions {
            match ins {
                Instruction::Layer { t, gates } => {
                    if last_t.is_some_and(|l| *t <= l) {
                        return bad(format!("layer {t} is not after layer {}", last_t.unwrap()));
                    }
                    last_t = Some(*t);
                    Circuit::new(n, vec![gates.clone()]).map_err(|e| Error::Protocol(format!("layer {t}: {e}")))?;
                }
                Instruction::Measure(m) => {
                    if m.site() == 0 || m.site() > n {
                        return Err(Error::SiteRange { site: m.site(), num_sites: n });
                    }
                    if !seen.insert(m.id.clone()) {
                        return bad(format!("duplicate measurement id {:?}", m.id));
                    }
                }
                Instruction::Recover(r) => {
                    if r.pauli.num_sites() != n {
                        return bad("recovery Pauli has the wrong length".into());
                    }
                    for id in &r.parity_of {
                        if !seen.contains(id) {
                            return bad(format!("recovery cites {id:?}, which is not an earlier measurement"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Deviations from a standard teleportation protocol; empty when standard.
    pub fn validate_standard(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut measured: BTreeMap<usize, String> = BTreeMap::new();
        let outputs: BTreeSet<usize> = self.logical_out.iter().copied().collect();
        for ins in &self.instructions {
            match ins {
                Instruction::Layer { t, gates } => {
                    for g in gates {
                        for s in &g.sites {
                            if let Some(id) = measured.get(s) {
                                out.push(Violation::new(
                                    "unitary-after-measurement",
                                    format!("{g} in layer {t} acts on site {s}, already measured by {id}"),
                                ));
                            }
                        }
                    }
                }
                Instruction::Measure(m) => {
                    measured.entry(m.site()).or_insert_with(|| m.id.clone());
                }
                Instruction::Recover(r) => {
                    let outside: Vec<usize> = r.pauli.support().into_iter().filter(|s| !outputs.contains(s)).collect();
                    if !outside.is_empty() {
                        out.push(Violation::new(
                            "recovery-outside-output",
                            format!("recovery {} acts on non-output sites {outside:?}", r.pauli.to_sparse()),
                        ));
                    }
                }
            }
        }
        let m = self.num_measurements();
        if m < 2 {
            out.push(Violation::new(
                "not-physical-teleportation",
                format!("{m} measurement(s): physical teleportation needs M > 1"),
            ));
        }
        out.sort();
        out
    }

    /// `(T, v)`: layer count and largest gate span; declared values win.
    pub fn depth_velocity(&self) -> DepthVelocity {
        let layers: Vec<&Vec<Gate>> = self
            .instructions
            .iter()
            .filter_map(|i| if let Instruction::Layer { gates, .. } = i { Some(gates) } else { None })
            .filter(|g| !g.is_empty())
            .collect();
        let t = layers.len();
        let v = layers
            .iter()
            .flat_map(|l| l.iter())
            .map(|g| {
                let mut m = 0.0f64;
                for a in &g.sites {
                    for b in &g.sites {
                        m = m.max(self.distance(*a, *b));
                    }
                }
                m
            })
            .fold(0.0, f64::max);
        let mut dv = DepthVelocity { t, v, computed: (t, v), warning: None };
        if let Some((dt, dvv)) = self.declared {
            if (dt, dvv as f64) != (t, v) {
                dv.warning = Some(format!("declared (T, v) = ({dt}, {dvv}) overrides computed ({t}, {v})"));
            }
            dv.t = dt;
            dv.v = dvv as f64;
        }
        dv
    }

    pub fn to_json(&self) -> Value {
        let initial: Vec<Value> = self
            .initial
            .labels()
            .iter()
            .enumerate()
            .map(|(i, l)| json!({"site": i + 1, "state": l.to_string()}))
            .collect();
        let instructions: Vec<Value> = self.instructions.iter().map(|i| instruction_json(i, self.num_sites)).collect();
        let mut doc = json!({
            "name": self.name,
            "num_sites": self.num_sites,
            "logical_in": self.logical_in,
            "logical_out": self.logical_out,
            "initial": initial,
            "instructions": instructions,
        });
        if let Some((t, v)) = self.declared {
            doc["declared"] = json!({"T": t, "v": v});
        }
        if let Some(c) = &self.coords {
            doc["coords"] = json!(c);
        }
        doc
    }

    /// Pretty JSON with sorted keys: identical protocols give identical bytes.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("serializable") + "\n"
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::schema("$", e.to_string()))?;
        parse_protocol(&v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthVelocity {
    pub t: usize,
    pub v: f64,
    pub computed: (usize, f64),
    pub warning: Option<String>,
}

fn instruction_json(ins: &Instruction, n: usize) -> Value {
    match ins {
        Instruction::Layer { t, gates } => {
            let gs: Vec<Value> = gates.iter().map(|g| json!({"g": g.kind.name(), "sites": g.sites})).collect();
            json!({"layer": t, "gates": gs})
        }
        Instruction::Measure(m) => {
            let obs = match &m.source {
                ObsSpec::Pauli(p) => json!(p.symbol().to_string()),
                ObsSpec::Bloch { bloch, trace, gap } => json!({"bloch": bloch, "trace": trace, "gap": gap}),
            };
            json!({"measure": {"id": m.id, "site": m.site(), "obs": obs}})
        }
        Instruction::Recover(r) => {
            let sites = r.pauli.support();
            let mut text = String::from(match r.pauli.phase().exponent() {
                0 => "",
                1 => "+i",
                2 => "-",
                _ => "-i",
            });
            text.extend(sites.iter().map(|&s| r.pauli.get(s).symbol()));
            let _ = n;
            json!({"recover": {"pauli": text, "sites": sites, "parity_of": r.parity_of}})
        }
    }
}

// ---------------------------------------------------------------- parsing

struct Obj<'a> {
    path: String,
    map: &'a Map<String, Value>,
}

impl<'a> Obj<'a> {
    fn new(v: &'a Value, path: &str, allowed: &[&str]) -> Result<Self> {
        let map = v.as_object().ok_or_else(|| Error::schema(path, "expected an object"))?;
        for k in map.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::schema(format!("{path}.{k}"), "unknown key"));
            }
        }
        Ok(Obj { path: path.to_string(), map })
    }

    fn sub(&self, key: &str) -> String {
        format!("{}.{key}", self.path)
    }

    fn get(&self, key: &str) -> Result<&'a Value> {
        self.map.get(key).ok_or_else(|| Error::schema(self.sub(key), "missing"))
    }

    fn opt(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key)
    }

    fn usize(&self, key: &str) -> Result<usize> {
        as_usize(self.get(key)?, &self.sub(key))
    }

    fn str(&self, key: &str) -> Result<&'a str> {
        self.get(key)?.as_str().ok_or_else(|| Error::schema(self.sub(key), "expected a string"))
    }

    fn array(&self, key: &str) -> Result<&'a Vec<Value>> {
        self.get(key)?.as_array().ok_or_else(|| Error::schema(self.sub(key), "expected an array"))
    }

    fn usizes(&self, key: &str) -> Result<Vec<usize>> {
        let p = self.sub(key);
        self.array(key)?.iter().enumerate().map(|(i, v)| as_usize(v, &format!("{p}[{i}]"))).collect()
    }

    fn f64(&self, key: &str) -> Result<f64> {
        self.get(key)?.as_f64().ok_or_else(|| Error::schema(self.sub(key), "expected a number"))
    }
}

fn as_usize(v: &Value, path: &str) -> Result<usize> {
    v.as_u64().map(|x| x as usize).ok_or_else(|| Error::schema(path, "expected a non-negative integer"))
}

pub fn parse_protocol(doc: &Value) -> Result<Protocol> {
    let top = Obj::new(
        doc,
        "$",
        &["name", "num_sites", "logical_in", "logical_out", "initial", "instructions", "declared", "coords"],
    )?;
    let name = top.str("name")?.to_string();
    let n = top.usize("num_sites")?;
    if n == 0 {
        return Err(Error::schema("$.num_sites", "must be positive"));
    }
    let logical_in = top.usizes("logical_in")?;
    let logical_out = top.usizes("logical_out")?;

    let mut labels: Vec<Option<SiteLabel>> = vec![None; n];
    for (i, entry) in top.array("initial")?.iter().enumerate() {
        let path = format!("$.initial[{i}]");
        let o = Obj::new(entry, &path, &["site", "state"])?;
        let site = o.usize("site")?;
        if site == 0 || site > n {
            return Err(Error::schema(o.sub("site"), format!("site {site} out of range 1..={n}")));
        }
        let label: SiteLabel =
            o.str("state")?.parse().map_err(|e: Error| Error::schema(o.sub("state"), e.to_string()))?;
        if labels[site - 1].replace(label).is_some() {
            return Err(Error::schema(o.sub("site"), format!("site {site} listed twice")));
        }
    }
    let labels: Vec<SiteLabel> = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::schema("$.initial", format!("site {} has no state", i + 1))))
        .collect::<Result<_>>()?;
    let initial = ProductState::new(labels).map_err(|e| Error::schema("$.initial", e.to_string()))?;

    let mut instructions = Vec::new();
    let mut ids: HashMap<String, usize> = HashMap::new();
    for (i, entry) in top.array("instructions")?.iter().enumerate() {
        let path = format!("$.instructions[{i}]");
        let keys: Vec<&str> = entry.as_object().map(|m| m.keys().map(String::as_str).collect()).unwrap_or_default();
        let ins = if keys.contains(&"layer") {
            let o = Obj::new(entry, &path, &["layer", "gates"])?;
            let t = o.usize("layer")?;
            let mut gates = Vec::new();
            for (gi, g) in o.array("gates")?.iter().enumerate() {
                let gp = format!("{path}.gates[{gi}]");
                let go = Obj::new(g, &gp, &["g", "sites"])?;
                let kind = GateKind::from_name(go.str("g")?).map_err(|e| Error::schema(go.sub("g"), e.to_string()))?;
                let sites = go.usizes("sites")?;
                let gate = Gate::new(kind, sites).map_err(|e| Error::schema(&gp, e.to_string()))?;
                gate.check_range(n).map_err(|e| Error::schema(&gp, e.to_string()))?;
                gates.push(gate);
            }
            Circuit::new(n, vec![gates.clone()]).map_err(|e| Error::schema(&path, e.to_string()))?;
            Instruction::Layer { t, gates }
        } else if keys.contains(&"measure") {
            let _ = Obj::new(entry, &path, &["measure"])?;
            let mp = format!("{path}.measure");
            let o = Obj::new(&entry["measure"], &mp, &["id", "site", "obs"])?;
            let id = o.str("id")?.to_string();
            let site = o.usize("site")?;
            if site == 0 || site > n {
                return Err(Error::schema(o.sub("site"), format!("site {site} out of range 1..={n}")));
            }
            if ids.insert(id.clone(), i).is_some() {
                return Err(Error::schema(o.sub("id"), format!("duplicate measurement id {id:?}")));
            }
            let (observable, source) = parse_obs(o.get("obs")?, &o.sub("obs"), site)?;
            Instruction::Measure(Measurement { id, observable, source })
        } else if keys.contains(&"recover") {
            let _ = Obj::new(entry, &path, &["recover"])?;
            let rp = format!("{path}.recover");
            let o = Obj::new(&entry["recover"], &rp, &["pauli", "sites", "parity_of"])?;
            let sites = o.usizes("sites")?;
            let local =
                parse_pauli(o.str("pauli")?, sites.len()).map_err(|e| Error::schema(o.sub("pauli"), e.to_string()))?;
            let mut pauli = PauliString::identity(n).with_phase(local.phase());
            for (j, &s) in sites.iter().enumerate() {
                if s == 0 || s > n {
                    return Err(Error::schema(o.sub("sites"), format!("site {s} out of range 1..={n}")));
                }
                if pauli.get(s) != Pauli::I || sites[..j].contains(&s) {
                    return Err(Error::schema(o.sub("sites"), format!("site {s} listed twice")));
                }
                pauli.set(s, local.get(j + 1));
            }
            let mut parity_of = Vec::new();
            for (j, v) in o.array("parity_of")?.iter().enumerate() {
                let id =
                    v.as_str().ok_or_else(|| Error::schema(format!("{rp}.parity_of[{j}]"), "expected a string"))?;
                if !ids.contains_key(id) {
                    return Err(Error::schema(
                        format!("{rp}.parity_of[{j}]"),
                        format!("dangling measurement id {id:?} (unknown or not yet measured)"),
                    ));
                }
                parity_of.push(id.to_string());
            }
            Instruction::Recover(Recovery { pauli, parity_of })
        } else {
            return Err(Error::schema(path, "expected one of layer, measure, recover"));
        };
        instructions.push(ins);
    }

    let declared = match top.opt("declared") {
        None => None,
        Some(v) => {
            let o = Obj::new(v, "$.declared", &["T", "v"])?;
            Some((o.usize("T")?, o.usize("v")?))
        }
    };
    let coords = match top.opt("coords") {
        None => None,
        Some(v) => {
            let arr = v.as_array().ok_or_else(|| Error::schema("$.coords", "expected an array"))?;
            let c: Vec<f64> = arr
                .iter()
                .enumerate()
                .map(|(i, x)| x.as_f64().ok_or_else(|| Error::schema(format!("$.coords[{i}]"), "expected a number")))
                .collect::<Result<_>>()?;
            Some(c)
        }
    };
    let p = Protocol { name, num_sites: n, logical_in, logical_out, initial, instructions, declared, coords };
    p.check_structure().map_err(|e| match e {
        Error::Protocol(m) => Error::schema("$", m),
        other => other,
    })?;
    Ok(p)
}

fn parse_obs(v: &Value, path: &str, site: usize) -> Result<(InvolutoryObservable, ObsSpec)> {
    if let Some(s) = v.as_str() {
        let p = match s {
            "X" => Pauli::X,
            "Y" => Pauli::Y,
            "Z" => Pauli::Z,
            _ => return Err(Error::schema(path, format!("unknown observable {s:?}"))),
        };
        return Ok((InvolutoryObservable::pauli(site, p), ObsSpec::Pauli(p)));
    }
    let o = Obj::new(v, path, &["bloch", "trace", "gap"])?;
    let arr = o.array("bloch")?;
    if arr.len() != 3 {
        return Err(Error::schema(o.sub("bloch"), "expected three components"));
    }
    let mut bloch = [0.0; 3];
    for (i, x) in arr.iter().enumerate() {
        bloch[i] = x.as_f64().ok_or_else(|| Error::schema(format!("{}[{i}]", o.sub("bloch")), "expected a number"))?;
    }
    let trace = o.f64("trace")?;
    let gap = o.f64("gap")?;
    let norm = bloch.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::schema(o.sub("bloch"), "zero Bloch vector"));
    }
    // The involutory part depends only on the eigenbasis, not on (trace, gap).
    let a = hermitian_from_bloch(bloch, trace, gap);
    let obs = involutory_part(site, a).map_err(|e| Error::schema(path, e.to_string()))?;
    Ok((obs, ObsSpec::Bloch { bloch, trace, gap }))
}

// --------------------------------------------------------------- canonical

#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalMeasurement {
    pub id: String,
    /// Effective observable after pulling later gates through.
    pub observable: Observable,
    pub original: InvolutoryObservable,
    /// Index of the source instruction.
    pub source: usize,
    /// Gates (by display form) the observable was conjugated by.
    pub pulled_through: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalRecovery {
    pub pauli: PauliString,
    pub parity: BTreeSet<String>,
    pub source: usize,
    pub pulled_through: Vec<String>,
}

/// `W = R·M·U`: every unitary first, then measurements in program order, then recoveries.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalProtocol {
    pub name: String,
    pub num_sites: usize,
    pub logical_in: Vec<usize>,
    pub logical_out: Vec<usize>,
    pub initial: ProductState,
    pub circuit: Circuit,
    pub measurements: Vec<CanonicalMeasurement>,
    pub recoveries: Vec<CanonicalRecovery>,
}

impl CanonicalProtocol {
    pub fn k(&self) -> usize {
        self.logical_in.len()
    }

    pub fn is_clifford(&self) -> bool {
        self.circuit.is_clifford()
    }

    pub fn measurement(&self, id: &str) -> Option<&CanonicalMeasurement> {
        self.measurements.iter().find(|m| m.id == id)
    }

    /// Measured observables as Pauli strings, when all are.
    pub fn pauli_observables(&self) -> Option<Vec<PauliString>> {
        self.measurements.iter().map(|m| m.observable.as_pauli().cloned()).collect()
    }

    /// True when the rewrite moved nothing past anything.
    pub fn provenance_is_identity(&self) -> bool {
        self.measurements.iter().all(|m| m.pulled_through.is_empty())
            && self.recoveries.iter().all(|r| r.pulled_through.is_empty())
    }
}

impl CanonicalProtocol {
    /// Structured form: circuit layers, effective measurements, recoveries.
    pub fn to_json(&self) -> Value {
        let layers: Vec<Value> = self
            .circuit
            .layers()
            .iter()
            .map(|l| Value::from(l.iter().map(|g| g.to_string()).collect::<Vec<_>>()))
            .collect();
        let measurements: Vec<Value> = self
            .measurements
            .iter()
            .map(|m| {
                json!({
                    "id": m.id,
                    "observable": m.observable.to_string(),
                    "original": m.original.to_string(),
                    "pulled_through": m.pulled_through,
                })
            })
            .collect();
        let recoveries: Vec<Value> = self
            .recoveries
            .iter()
            .map(|r| json!({"pauli": r.pauli.to_sparse(), "parity_of": r.parity.iter().collect::<Vec<_>>(), "pulled_through": r.pulled_through}))
            .collect();
        json!({
            "name": self.name,
            "num_sites": self.num_sites,
            "logical_in": self.logical_in,
            "logical_out": self.logical_out,
            "initial": self.initial.labels().iter().map(|l| l.to_string()).collect::<Vec<_>>(),
            "circuit": layers,
            "measurements": measurements,
            "recoveries": recoveries,
        })
    }
}

pub fn canonicalize(p: &Protocol) -> Result<CanonicalProtocol> {
    p.check_structure()?;
    let violations: Vec<Violation> =
        p.validate_standard().into_iter().filter(|v| v.code != "not-physical-teleportation").collect();
    if let Some(v) = violations.first() {
        return Err(Error::Protocol(format!("not a standard protocol: {v}")));
    }
    let n = p.num_sites;
    let mut layers: Vec<Vec<Gate>> = Vec::new();
    let mut measurements: Vec<CanonicalMeasurement> = Vec::new();
    let mut recoveries: Vec<CanonicalRecovery> = Vec::new();
    // Pending observables are conjugated forward by every later gate they overlap.
    for (idx, ins) in p.instructions.iter().enumerate() {
        match ins {
            Instruction::Layer { gates, .. } => {
                for g in gates {
                    for m in measurements.iter_mut() {
                        let overlap = m.observable.support().iter().any(|s| g.sites.contains(s));
                        if !overlap {
                            continue;
                        }
                        let q = match &m.observable {
                            Observable::Pauli(q) => q.clone(),
                            Observable::Axis(_) => {
                                return Err(Error::Unsupported(format!(
                                    "cannot pull {g} through the non-Pauli measurement {}",
                                    m.id
                                )))
                            }
                        };
                        let img = crate::gate::conjugate(g, &q).map_err(|_| {
                            Error::Unsupported(format!(
                                "non-Clifford {g} after measurement {}: author it canonically",
                                m.id
                            ))
                        })?;
                        m.observable = Observable::Pauli(img);
                        m.pulled_through.push(g.to_string());
                    }
                    for r in recoveries.iter_mut() {
                        if !g.sites.iter().any(|s| r.pauli.support().contains(s)) {
                            continue;
                        }
                        r.pauli = crate::gate::conjugate(g, &r.pauli).map_err(|_| {
                            Error::Unsupported(format!("non-Clifford {g} after a recovery: author it canonically"))
                        })?;
                        r.pulled_through.push(g.to_string());
                    }
                }
                layers.push(gates.clone());
            }
            Instruction::Measure(m) => {
                let obs = Observable::from_involutory(&m.observable, n);
                for r in &recoveries {
                    let commutes = Observable::Pauli(r.pauli.clone()).commutes_with(&obs);
                    if !commutes {
                        return Err(Error::Unsupported(format!(
                            "measurement {} follows an anticommuting recovery; the outcome relabelling is not modelled",
                            m.id
                        )));
                    }
                }
                measurements.push(CanonicalMeasurement {
                    id: m.id.clone(),
                    observable: obs,
                    original: m.observable,
                    source: idx,
                    pulled_through: Vec::new(),
                });
            }
            Instruction::Recover(r) => recoveries.push(CanonicalRecovery {
                pauli: r.pauli.clone(),
                parity: r.parity_set(),
                source: idx,
                pulled_through: Vec::new(),
            }),
        }
    }
    let layers: Vec<Vec<Gate>> = layers.into_iter().filter(|l| !l.is_empty()).collect();
    let circuit = Circuit::new(n, layers)?;
    Ok(CanonicalProtocol {
        name: p.name.clone(),
        num_sites: n,
        logical_in: p.logical_in.clone(),
        logical_out: p.logical_out.clone(),
        initial: p.initial.clone(),
        circuit,
        measurements,
        recoveries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLUSTER5: &str = r#"{
      "name": "cluster_x_5", "num_sites": 5, "logical_in": [1], "logical_out": [5],
      "initial": [{"site":1,"state":"logical:1"},{"site":2,"state":"+"},{"site":3,"state":"+"},
                  {"site":4,"state":"+"},{"site":5,"state":"+"}],
      "instructions": [
        {"layer": 1, "gates": [{"g":"cz","sites":[1,2]},{"g":"cz","sites":[3,4]}]},
        {"layer": 2, "gates": [{"g":"cz","sites":[2,3]},{"g":"cz","sites":[4,5]}]},
        {"measure": {"id":"m1","site":1,"obs":"X"}},
        {"measure": {"id":"m2","site":2,"obs":"X"}},
        {"measure": {"id":"m3","site":3,"obs":"X"}},
        {"measure": {"id":"m4","site":4,"obs":"X"}},
        {"recover": {"pauli":"Z","sites":[5],"parity_of":["m1","m3"]}},
        {"recover": {"pauli":"X","sites":[5],"parity_of":["m2","m4"]}}
      ]}"#;

    fn cluster() -> Protocol {
        Protocol::from_json_str(CLUSTER5).unwrap()
    }

    fn edit(f: impl FnOnce(&mut Value)) -> Result<Protocol> {
        let mut v: Value = serde_json::from_str(CLUSTER5).unwrap();
        f(&mut v);
        parse_protocol(&v)
    }

    #[test]
    fn parses_cluster() {
        let p = cluster();
        assert_eq!(p.num_sites, 5);
        assert_eq!(p.num_measurements(), 4);
        assert_eq!(p.recoveries().count(), 2);
        assert!(p.validate_standard().is_empty());
        let dv = p.depth_velocity();
        assert_eq!((dv.t, dv.v), (2, 1.0));
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let p = cluster();
        let text = p.to_json_string();
        let q = Protocol::from_json_str(&text).unwrap();
        assert_eq!(p, q);
        assert_eq!(text, q.to_json_string());
    }

    #[test]
    fn schema_errors_carry_paths() {
        let e = edit(|v| v["instructions"][6]["recover"]["parity_of"][0] = json!("m9")).unwrap_err();
        assert!(e.to_string().contains("$.instructions[6].recover.parity_of[0]"), "{e}");
        assert!(e.to_string().contains("m9"));
        let e = edit(|v| v["extra"] = json!(1)).unwrap_err();
        assert!(e.to_string().contains("$.extra"), "{e}");
        let e = edit(|v| v["instructions"][2]["measure"]["obs"] = json!("W")).unwrap_err();
        assert!(e.to_string().contains("obs"), "{e}");
        // Recovery citing a later measurement.
        let e = edit(|v| {
            let arr = v["instructions"].as_array_mut().unwrap();
            let rec = arr.remove(6);
            arr.insert(2, rec);
        })
        .unwrap_err();
        assert!(e.to_string().contains("dangling"), "{e}");
        let e = edit(|v| v["instructions"][0]["gates"][1]["sites"] = json!([2, 3])).unwrap_err();
        assert!(e.to_string().contains("instructions[0]"), "{e}");
    }

    #[test]
    fn trivial_identity_protocol() {
        let doc = json!({"name":"wire","num_sites":1,"logical_in":[1],"logical_out":[1],
            "initial":[{"site":1,"state":"logical:1"}],"instructions":[]});
        let p = parse_protocol(&doc).unwrap();
        assert_eq!(p.depth_velocity().t, 0);
        let v = p.validate_standard();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, "not-physical-teleportation");
    }

    #[test]
    fn gate_after_measurement_is_flagged() {
        let mut p = cluster();
        p.instructions.insert(3, Instruction::Layer { t: 3, gates: vec![Gate::cz(1, 2)] });
        let v = p.validate_standard();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, "unitary-after-measurement");
    }

    #[test]
    fn single_measurement_is_flagged() {
        let doc = json!({"name":"one","num_sites":2,"logical_in":[1],"logical_out":[2],
            "initial":[{"site":1,"state":"logical:1"},{"site":2,"state":"+"}],
            "instructions":[{"layer":1,"gates":[{"g":"cz","sites":[1,2]}]},
                            {"measure":{"id":"a","site":1,"obs":"X"}},
                            {"recover":{"pauli":"Z","sites":[2],"parity_of":["a"]}}]});
        let v = parse_protocol(&doc).unwrap().validate_standard();
        assert_eq!(v.iter().map(|v| v.code).collect::<Vec<_>>(), vec!["not-physical-teleportation"]);
    }

    #[test]
    fn bloch_observable_parsed_eagerly() {
        let p = edit(|v| {
            v["instructions"][2]["measure"]["obs"] = json!({"bloch": [2.0, 0.0, 0.0], "trace": 7.0, "gap": 3.0})
        })
        .unwrap();
        let m = p.measurements().next().unwrap();
        assert!(m.observable.is_pauli());
        assert!(edit(
            |v| v["instructions"][2]["measure"]["obs"] = json!({"bloch": [1.0, 0.0, 0.0], "trace": 1.0, "gap": 0.0})
        )
        .is_err());
    }

    #[test]
    fn canonical_cluster_is_unchanged() {
        let c = canonicalize(&cluster()).unwrap();
        assert!(c.provenance_is_identity());
        assert_eq!(c.circuit.depth(), 2);
        assert_eq!(c.measurements.len(), 4);
        assert_eq!(c.recoveries[0].pauli.to_sparse(), "Z5");
    }

    #[test]
    fn measurement_before_disjoint_layer_keeps_observable() {
        let doc = json!({"name":"late","num_sites":3,"logical_in":[1],"logical_out":[3],
            "initial":[{"site":1,"state":"logical:1"},{"site":2,"state":"+"},{"site":3,"state":"+"}],
            "instructions":[{"layer":1,"gates":[{"g":"cz","sites":[1,2]}]},
                            {"measure":{"id":"a","site":1,"obs":"Z"}},
                            {"layer":2,"gates":[{"g":"cz","sites":[2,3]}]},
                            {"measure":{"id":"b","site":2,"obs":"X"}}]});
        let c = canonicalize(&parse_protocol(&doc).unwrap()).unwrap();
        assert_eq!(c.measurements[0].observable.to_string(), "Z1");
        assert!(c.measurements[0].pulled_through.is_empty());
        assert_eq!(c.circuit.depth(), 2);
    }

    #[test]
    fn recovery_pulled_through_later_clifford() {
        let doc = json!({"name":"r","num_sites":3,"logical_in":[1],"logical_out":[3],
            "initial":[{"site":1,"state":"logical:1"},{"site":2,"state":"+"},{"site":3,"state":"+"}],
            "instructions":[{"measure":{"id":"a","site":1,"obs":"X"}},
                            {"measure":{"id":"b","site":2,"obs":"X"}},
                            {"recover":{"pauli":"X","sites":[3],"parity_of":["a"]}},
                            {"layer":1,"gates":[{"g":"h","sites":[3]}]}]});
        let c = canonicalize(&parse_protocol(&doc).unwrap()).unwrap();
        assert_eq!(c.recoveries[0].pauli.to_sparse(), "Z3");
        assert_eq!(c.recoveries[0].pulled_through, vec!["h(3)".to_string()]);
        assert!(!c.provenance_is_identity());
    }
}
