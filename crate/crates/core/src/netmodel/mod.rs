//! Per-unit network model: buses, generators and branches with every
//! parameter the relaxations need.

mod matpower;

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use matpower::{parse_case, parse_case_unchecked};

use crate::error::CaseError;

/// Version tag written into every network JSON dump.
pub const NETWORK_SCHEMA: &str = "acopf-network/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Pq,
    Pv,
    Reference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    /// Complex demand `p + iq` in per unit.
    pub demand: Complex64,
    /// Shunt admittance `g + ib` in per unit.
    pub shunt: Complex64,
    pub vmin: f64,
    pub vmax: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    /// Cost `c0 + c1 P + c2 P^2` with `P` in MW: `$/h`, `$/MWh`, `$/MW^2h`.
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Generator {
    /// Cost in $/h for a per-unit active injection.
    pub fn cost(&self, p_pu: f64, base_mva: f64) -> f64 {
        let p = p_pu * base_mva;
        self.c0 + self.c1 * p + self.c2 * p * p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Series admittance `1 / (r + ix)`.
    pub series: Complex64,
    /// Charging admittance at each end (`i b / 2`).
    pub charging: Complex64,
    /// Complex tap `|T| e^{i shift}` applied at the from end.
    pub tap: Complex64,
    /// Squared apparent-power limit in per unit squared.
    pub thermal_limit: f64,
    /// Angle-difference bounds in radians.
    pub angle_min: f64,
    pub angle_max: f64,
}

impl Branch {
    pub fn tap_sq(&self) -> f64 {
        self.tap.norm_sqr()
    }

    /// Complex power leaving each end, given the end voltages.
    pub fn flows(&self, vf: Complex64, vt: Complex64) -> (Complex64, Complex64) {
        let ytt = (self.series + self.charging).conj();
        let ys = self.series.conj();
        let sf = ytt * vf.norm_sqr() / self.tap_sq() - ys * vf * vt.conj() / self.tap;
        let st = ytt * vt.norm_sqr() - ys * vf.conj() * vt / self.tap.conj();
        (sf, st)
    }

    /// Scaled end currents `((Y+Yc) Vf / T − Y Vt, (Y+Yc) Vt − Y Vf / T)`.
    /// The from value is `T*` times the physical current, so that
    /// `|T|² |Sf|² = |If|² |Vf|²` and `|St|² = |It|² |Vt|²`.
    pub fn currents(&self, vf: Complex64, vt: Complex64) -> (Complex64, Complex64) {
        let ytt = self.series + self.charging;
        let i_f = ytt * vf / self.tap - self.series * vt;
        let i_t = ytt * vt - self.series * vf / self.tap;
        (i_f, i_t)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Network {
    pub schema: String,
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
    #[serde(skip)]
    index: BTreeMap<usize, usize>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema
            && self.name == other.name
            && self.base_mva == other.base_mva
            && self.buses == other.buses
            && self.generators == other.generators
            && self.branches == other.branches
    }
}

impl Network {
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        generators: Vec<Generator>,
        branches: Vec<Branch>,
    ) -> Self {
        let mut net = Network {
            schema: NETWORK_SCHEMA.to_string(),
            name: name.into(),
            base_mva,
            buses,
            generators,
            branches,
            index: BTreeMap::new(),
        };
        net.rebuild_index();
        net
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .buses
            .iter()
            .enumerate()
            .map(|(k, b)| (b.id, k))
            .collect();
    }

    /// Position of bus `id` in `buses`.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Position of bus `id`; panics on an unknown id. Only for validated
    /// networks.
    pub fn idx(&self, id: usize) -> usize {
        self.index[&id]
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Index of the angle-reference bus: the first bus typed as reference,
    /// else the first bus with a generator, else bus 0.
    pub fn reference_bus(&self) -> usize {
        if let Some(k) = self.buses.iter().position(|b| b.kind == BusKind::Reference) {
            return k;
        }
        self.generators
            .first()
            .and_then(|g| self.bus_index(g.bus))
            .unwrap_or(0)
    }

    /// Generators attached to each bus (by bus position).
    pub fn generators_at(&self) -> Vec<Vec<usize>> {
        let mut at = vec![Vec::new(); self.buses.len()];
        for (k, g) in self.generators.iter().enumerate() {
            if let Some(i) = self.bus_index(g.bus) {
                at[i].push(k);
            }
        }
        at
    }

    pub fn total_demand_abs(&self) -> f64 {
        self.buses.iter().map(|b| b.demand.norm()).sum()
    }

    /// Sum of `c0` over all generators.
    pub fn fixed_cost(&self) -> f64 {
        self.generators.iter().map(|g| g.c0).sum()
    }

    /// Canonical JSON dump (field order is the declaration order).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CaseError> {
        let mut net: Network =
            serde_json::from_str(text).map_err(|e| CaseError::Json(e.to_string()))?;
        if net.schema != NETWORK_SCHEMA {
            return Err(CaseError::Json(format!(
                "unsupported schema `{}`",
                net.schema
            )));
        }
        net.rebuild_index();
        Ok(net)
    }

    /// Copy of the network without the branch between buses `a` and `b`
    /// (every parallel circuit is dropped).
    pub fn without_branch(&self, a: usize, b: usize, name: &str) -> Network {
        let branches = self
            .branches
            .iter()
            .filter(|br| !((br.from == a && br.to == b) || (br.from == b && br.to == a)))
            .cloned()
            .collect();
        Network::new(
            name,
            self.base_mva,
            self.buses.clone(),
            self.generators.clone(),
            branches,
        )
    }

    /// Checks every type invariant. An empty list means the network is
    /// usable by the model builders.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = BTreeMap::new();
        for b in &self.buses {
            let entity = format!("bus {}", b.id);
            if seen.insert(b.id, ()).is_some() {
                out.push(Violation::new(&entity, "duplicate bus id"));
            }
            if !(b.vmin > 0.0) {
                out.push(Violation::new(&entity, "vmin must be positive"));
            }
            if b.vmin > b.vmax {
                out.push(Violation::new(&entity, "vmin > vmax"));
            }
        }
        for (k, g) in self.generators.iter().enumerate() {
            let entity = format!("generator {} (bus {})", k + 1, g.bus);
            if self.bus_index(g.bus).is_none() {
                out.push(Violation::new(&entity, "dangling generator reference"));
            }
            if g.pmin > g.pmax {
                out.push(Violation::new(&entity, "pmin > pmax"));
            }
            if g.qmin > g.qmax {
                out.push(Violation::new(&entity, "qmin > qmax"));
            }
            if g.c2 < 0.0 {
                out.push(Violation::new(
                    &entity,
                    "negative quadratic cost (nonconvex)",
                ));
            }
        }
        for (k, br) in self.branches.iter().enumerate() {
            let entity = format!("branch {} ({}-{})", k + 1, br.from, br.to);
            if self.bus_index(br.from).is_none() || self.bus_index(br.to).is_none() {
                out.push(Violation::new(&entity, "dangling branch endpoint"));
            }
            if br.from == br.to {
                out.push(Violation::new(&entity, "self loop"));
            }
            let eps = 1e-12;
            if br.angle_min < -FRAC_PI_2 - eps
                || br.angle_max > FRAC_PI_2 + eps
                || br.angle_min > br.angle_max
            {
                out.push(Violation::new(
                    &entity,
                    "angle bounds outside [-pi/2, pi/2] or crossed",
                ));
            }
            if !(br.tap.norm() > 0.0) {
                out.push(Violation::new(&entity, "tap magnitude must be positive"));
            }
            if !(br.thermal_limit > 0.0) {
                out.push(Violation::new(&entity, "thermal limit must be positive"));
            }
            if !br.series.re.is_finite() || !br.series.im.is_finite() {
                out.push(Violation::new(&entity, "zero impedance"));
            }
        }
        if out.is_empty() {
            let comps = self.components();
            if comps.len() > 1 {
                let desc: Vec<String> = comps
                    .iter()
                    .map(|c| {
                        let ids: Vec<String> =
                            c.iter().map(|&i| self.buses[i].id.to_string()).collect();
                        format!("{{{}}}", ids.join(","))
                    })
                    .collect();
                out.push(Violation::new(
                    "network",
                    &format!("disconnected: {}", desc.join(" ")),
                ));
            }
        }
        out
    }

    /// Connected components as lists of bus positions.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            if let (Some(a), Some(b)) = (self.bus_index(br.from), self.bus_index(br.to)) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let mut comp = vec![usize::MAX; n];
        let mut out = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let c = out.len();
            let mut stack = vec![s];
            let mut members = Vec::new();
            comp[s] = c;
            while let Some(u) = stack.pop() {
                members.push(u);
                for &v in &adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = c;
                        stack.push(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }
}

/// A failed invariant: which entity and what went wrong.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub entity: String,
    pub message: String,
}

impl Violation {
    fn new(entity: &str, message: &str) -> Self {
        Violation {
            entity: entity.to_string(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.message)
    }
}
