//! Task distance and the locality bounds a teleportation protocol must obey.

use serde::Serialize;

use crate::error::Result;
use crate::protocol::{canonicalize, Protocol};
use crate::stringorder::{attachment_map, necessary_measurements, segment_regions};

const EPS: f64 = 1e-12;

/// `L = min_n d(i_n, f_n)`.
pub fn task_distance(p: &Protocol) -> f64 {
    let d = p.logical_in.iter().zip(&p.logical_out).map(|(&i, &f)| p.distance(i, f));
    d.reduce(f64::min).unwrap_or(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    pub formula: String,
    pub value: f64,
    pub applicable: bool,
    pub pass: bool,
    /// `value − L`, or `T − (1 + k/v)` for the depth bound.
    pub slack: f64,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub protocol: String,
    pub l: f64,
    pub t: usize,
    pub v: f64,
    pub m: usize,
    pub m_raw: usize,
    pub k: usize,
    pub regions: Option<usize>,
    pub teleports: bool,
    pub bounds: Vec<BoundCheck>,
    pub warnings: Vec<String>,
    pub pass: bool,
}

/// `vT + 2v⌊M/2k⌋(T−1)`.
pub fn standard_bound(k: usize, m: usize, t: usize, v: f64) -> f64 {
    let t = t as f64;
    v * t + 2.0 * v * (m / (2 * k)) as f64 * (t - 1.0).max(0.0)
}

/// `2(1 + ⌊M/k⌋)vT`.
pub fn fyhl_bound(k: usize, m: usize, t: usize, v: f64) -> f64 {
    2.0 * (1 + m / k) as f64 * v * t as f64
}

/// Evaluates every bound with `M` counted after dropping measurements that
/// feed no recovery or anticommute with an earlier necessary one.
pub fn check_bounds(p: &Protocol) -> Result<BoundReport> {
    p.check_structure()?;
    let dv = p.depth_velocity();
    let (t, v) = (dv.t, dv.v);
    let k = p.k().max(1);
    let l = task_distance(p);
    let m_raw = p.num_measurements();
    let mut warnings: Vec<String> = dv.warning.into_iter().collect();
    let (m, regions) = match canonicalize(p) {
        Ok(c) => match attachment_map(&c) {
            Ok(map) => {
                let m = necessary_measurements(&c, &map).len();
                let regions = segment_regions(&c, &map).ok().map(|s| s.regions.len());
                (m, regions)
            }
            Err(e) => {
                warnings.push(format!("attachment map unavailable ({e}); using the raw measurement count"));
                (m_raw, None)
            }
        },
        Err(e) => {
            warnings.push(format!("no canonical form ({e}); using the raw measurement count"));
            (m_raw, None)
        }
    };
    let teleports = l > v * t as f64 + EPS;
    let mut bounds = Vec::new();

    let value = standard_bound(k, m, t, v);
    bounds.push(BoundCheck {
        name: "standard",
        formula: "vT + 2v*floor(M/2k)*(T-1)".into(),
        value,
        applicable: true,
        pass: l <= value + EPS,
        slack: value - l,
        note: String::new(),
    });

    let value = fyhl_bound(k, m, t, v);
    bounds.push(BoundCheck {
        name: "fyhl",
        formula: "2(1 + floor(M/k))vT".into(),
        value,
        applicable: true,
        pass: l <= value + EPS,
        slack: value - l,
        note: String::new(),
    });

    let value = v * t as f64;
    let lr_applies = m == 0;
    let lr_pass = !lr_applies || l <= value + EPS;
    bounds.push(BoundCheck {
        name: "lieb_robinson",
        formula: "vT (M = 0)".into(),
        value,
        applicable: lr_applies,
        pass: lr_pass,
        slack: value - l,
        note: if !lr_pass {
            "exceeds Lieb-Robinson without measurements".into()
        } else if !lr_applies {
            "measurements present; L > vT marks genuine teleportation".into()
        } else {
            String::new()
        },
    });

    let need = 1.0 + p.k() as f64 / v;
    let depth_applies = teleports && v > 0.0;
    let depth_pass = !depth_applies || t as f64 + EPS >= need;
    bounds.push(BoundCheck {
        name: "min_depth",
        formula: "T >= 1 + k/v".into(),
        value: need,
        applicable: depth_applies,
        pass: depth_pass,
        slack: t as f64 - need,
        note: if depth_applies && (t as f64 - need).abs() <= EPS { "saturated".into() } else { String::new() },
    });

    let pass = bounds.iter().all(|b| b.pass);
    Ok(BoundReport {
        protocol: p.name.clone(),
        l,
        t,
        v,
        m,
        m_raw,
        k: p.k(),
        regions,
        teleports,
        bounds,
        warnings,
        pass,
    })
}
