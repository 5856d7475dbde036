//! Grid topology and per-unit branch/bus admittance model.

mod admittance;
mod case_format;

pub use admittance::{build_bus_admittance, AdmittanceMatrix};
pub use case_format::{parse_case, serialize_case};

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};

/// Integer bus label as it appears in the case file.
pub type BusId = u32;

/// Case text shipped with the crate, by short name (`ieee14`, `ieee118`).
pub fn builtin_case(name: &str) -> Option<&'static str> {
    match name {
        "ieee14" => Some(include_str!("../../tests/fixtures/case14.m")),
        "ieee118" => Some(include_str!("../../tests/fixtures/case118.m")),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    /// Nominal voltage in kV. `None` when the case leaves it unspecified.
    pub base_kv: Option<f64>,
    /// Shunt conductance to ground, p.u.
    pub shunt_g: f64,
    /// Shunt susceptance to ground, p.u.
    pub shunt_b: f64,
    /// Active load, p.u.
    pub load_p: f64,
    /// Reactive load, p.u.
    pub load_q: f64,
    /// Voltage magnitude column of the case file (p.u.).
    pub vm: f64,
    /// Voltage angle column of the case file (radians).
    pub va: f64,
}

impl Bus {
    pub fn shunt(&self) -> Complex64 {
        Complex64::new(self.shunt_g, self.shunt_b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchStatus {
    InService,
    OutOfService,
}

/// π-model branch with an off-nominal tap on the from side.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub series_r: f64,
    pub series_x: f64,
    /// Total line charging susceptance, p.u.
    pub charging_b: f64,
    /// Tap magnitude; 1.0 for lines.
    pub tap_ratio: f64,
    /// Phase shift in radians.
    pub phase_shift: f64,
    pub status: BranchStatus,
}

/// Admittance stamp of a two-port branch: currents leaving each terminal are
/// `i_from = ff·v_from + ft·v_to` and `i_to = tf·v_from + tt·v_to`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoPort {
    pub ff: Complex64,
    pub ft: Complex64,
    pub tf: Complex64,
    pub tt: Complex64,
}

impl TwoPort {
    pub fn from_current(&self, v_from: Complex64, v_to: Complex64) -> Complex64 {
        self.ff * v_from + self.ft * v_to
    }

    pub fn to_current(&self, v_from: Complex64, v_to: Complex64) -> Complex64 {
        self.tf * v_from + self.tt * v_to
    }
}

impl Branch {
    pub fn is_in_service(&self) -> bool {
        self.status == BranchStatus::InService
    }

    /// Standard π-model stamp with complex tap `t = tap_ratio·e^{j·phase_shift}`.
    pub fn two_port(&self) -> TwoPort {
        let z = Complex64::new(self.series_r, self.series_x);
        assert!(
            z.norm_sqr() > 0.0,
            "branch {}-{} has zero series impedance",
            self.from_bus,
            self.to_bus
        );
        let y_series = z.inv();
        let half_charging = Complex64::new(0.0, self.charging_b / 2.0);
        let tap = Complex64::from_polar(self.tap_ratio, self.phase_shift);
        let tt = y_series + half_charging;
        TwoPort {
            ff: tt / (self.tap_ratio * self.tap_ratio),
            ft: -y_series / tap.conj(),
            tf: -y_series / tap,
            tt,
        }
    }

    /// The terminal of this branch opposite to `bus`.
    pub fn other_end(&self, bus: BusId) -> BusId {
        if self.from_bus == bus {
            self.to_bus
        } else {
            self.from_bus
        }
    }
}

pub fn branch_two_port(branch: &Branch) -> TwoPort {
    branch.two_port()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub bus: BusId,
    /// Active output, p.u.
    pub p: f64,
    /// Reactive output, p.u.
    pub q: f64,
    /// Voltage magnitude set point, p.u.
    pub v_set: f64,
    pub in_service: bool,
}

/// Which side of a branch touches a given bus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchEnd {
    From,
    To,
}

/// Validated, immutable grid model in system per-unit.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    name: String,
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
    slack: usize,
    positions: HashMap<BusId, usize>,
    incidence: Vec<Vec<(usize, BranchEnd)>>,
}

impl NetworkModel {
    /// Validates and freezes a network. Out-of-service branches are dropped
    /// before the connectivity check.
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self> {
        if !(base_mva > 0.0 && base_mva.is_finite()) {
            return Err(Error::InvalidCase(format!("base MVA must be positive, got {base_mva}")));
        }

        let mut positions = HashMap::with_capacity(buses.len());
        for (pos, bus) in buses.iter().enumerate() {
            if positions.insert(bus.id, pos).is_some() {
                return Err(Error::DuplicateBus(bus.id));
            }
            if let Some(kv) = bus.base_kv {
                if !(kv > 0.0) {
                    return Err(Error::InvalidBus {
                        bus: bus.id,
                        reason: format!("base kV must be positive, got {kv}"),
                    });
                }
            }
        }

        let slacks: Vec<usize> = buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Slack)
            .map(|(i, _)| i)
            .collect();
        if slacks.len() != 1 {
            return Err(Error::SlackCount(slacks.len()));
        }

        for (k, br) in branches.iter().enumerate() {
            for bus in [br.from_bus, br.to_bus] {
                if !positions.contains_key(&bus) {
                    return Err(Error::DanglingBranch { branch: k, bus });
                }
            }
            let invalid = |reason: &str| Error::InvalidBranch {
                branch: k,
                from: br.from_bus,
                to: br.to_bus,
                reason: reason.to_string(),
            };
            if br.from_bus == br.to_bus {
                return Err(invalid("both ends on the same bus"));
            }
            if !(br.series_r * br.series_r + br.series_x * br.series_x > 0.0) {
                return Err(invalid("zero series impedance"));
            }
            if !(br.tap_ratio > 0.0) {
                return Err(invalid("tap ratio must be positive"));
            }
        }
        for g in &generators {
            if !positions.contains_key(&g.bus) {
                return Err(Error::UnknownBus(g.bus));
            }
        }

        let branches: Vec<Branch> = branches.into_iter().filter(Branch::is_in_service).collect();

        let mut incidence = vec![Vec::new(); buses.len()];
        for (k, br) in branches.iter().enumerate() {
            incidence[positions[&br.from_bus]].push((k, BranchEnd::From));
            incidence[positions[&br.to_bus]].push((k, BranchEnd::To));
        }

        let net = Self {
            name: name.into(),
            base_mva,
            buses,
            branches,
            generators,
            slack: slacks[0],
            positions,
            incidence,
        };
        net.check_connected()?;
        Ok(net)
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.buses.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([self.slack]);
        seen[self.slack] = true;
        while let Some(p) = queue.pop_front() {
            for &(k, end) in &self.incidence[p] {
                let br = &self.branches[k];
                let other = match end {
                    BranchEnd::From => br.to_bus,
                    BranchEnd::To => br.from_bus,
                };
                let q = self.positions[&other];
                if !seen[q] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            }
        }
        let unreachable: Vec<BusId> = (0..n).filter(|&p| !seen[p]).map(|p| self.buses[p].id).collect();
        if unreachable.is_empty() {
            Ok(())
        } else {
            Err(Error::Disconnected { unreachable })
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    /// In-service branches only.
    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn slack_bus(&self) -> BusId {
        self.buses[self.slack].id
    }

    pub fn slack_position(&self) -> usize {
        self.slack
    }

    /// Position of a bus id in [`Self::buses`].
    pub fn position(&self, id: BusId) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    pub fn require_position(&self, id: BusId) -> Result<usize> {
        self.position(id).ok_or(Error::UnknownBus(id))
    }

    /// Branches incident to the bus at `position`, with the side that touches it.
    pub fn incident(&self, position: usize) -> &[(usize, BranchEnd)] {
        &self.incidence[position]
    }
}
