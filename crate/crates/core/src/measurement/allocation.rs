use crate::error::{Error, Result};
use crate::network::{BusId, NetworkModel};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// What the current channels of a PMU observe.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmuMode {
    /// One channel per incident line.
    #[default]
    LineFlow,
    /// A single channel for the bus injection.
    Injection,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceCounts {
    pub pmu: usize,
    pub rtu_injection: usize,
    pub rtu_flow: usize,
}

impl DeviceCounts {
    pub fn new(pmu: usize, rtu_injection: usize, rtu_flow: usize) -> Self {
        Self {
            pmu,
            rtu_injection,
            rtu_flow,
        }
    }

    pub fn total(&self) -> usize {
        self.pmu + self.rtu_injection + self.rtu_flow
    }
}

/// Device sites. The three lists are sorted and pairwise disjoint; every
/// PMU and flow RTU covers all lines incident to its bus.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementAllocation {
    pub pmu_mode: PmuMode,
    pub pmu: Vec<BusId>,
    pub rtu_injection: Vec<BusId>,
    pub rtu_flow: Vec<BusId>,
}

/// Site restrictions derived from the operating point.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AllocationRules {
    pub pmu_mode: PmuMode,
    /// Buses whose load current is zero.
    pub no_injection_rtu: BTreeSet<BusId>,
    /// Buses with a zero-current incident line.
    pub no_flow_rtu: BTreeSet<BusId>,
}

impl MeasurementAllocation {
    pub fn counts(&self) -> DeviceCounts {
        DeviceCounts::new(self.pmu.len(), self.rtu_injection.len(), self.rtu_flow.len())
    }

    /// Branch indices monitored by a PMU or flow RTU at `bus`.
    pub fn monitored_branches(&self, net: &NetworkModel, bus: BusId) -> Result<Vec<usize>> {
        let pos = net.require_position(bus)?;
        Ok(net.incident(pos).iter().map(|&(k, _)| k).collect())
    }

    /// Checks site ids, disjointness and the slack PMU.
    pub fn validate(&self, net: &NetworkModel) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &bus in self.pmu.iter().chain(&self.rtu_injection).chain(&self.rtu_flow) {
            net.require_position(bus)?;
            if !seen.insert(bus) {
                return Err(Error::InfeasibleAllocation(format!(
                    "bus {bus} hosts more than one device"
                )));
            }
        }
        if !self.pmu.contains(&net.slack_bus()) {
            return Err(Error::InfeasibleAllocation(format!(
                "slack bus {} must host a PMU",
                net.slack_bus()
            )));
        }
        Ok(())
    }
}

/// PMU sites published for the IEEE 14-bus system.
fn published_pmu_sites(net: &NetworkModel, count: usize) -> Option<Vec<BusId>> {
    let ids: Vec<BusId> = net.buses().iter().map(|b| b.id).collect();
    let is_ieee14 = ids == (1..=14).collect::<Vec<_>>() && net.slack_bus() == 1;
    (is_ieee14 && count == 3).then(|| vec![1, 6, 8])
}

/// Places devices. The slack bus always gets a PMU; the other sites are a
/// seeded shuffle, with buses that cannot host a given RTU type steered to
/// the other type or, failing both, to a PMU.
pub fn allocate(
    net: &NetworkModel,
    counts: DeviceCounts,
    seed: u64,
    rules: &AllocationRules,
) -> Result<MeasurementAllocation> {
    let n = net.bus_count();
    if counts.total() > n {
        return Err(Error::InfeasibleAllocation(format!(
            "{} devices requested for {n} buses",
            counts.total()
        )));
    }
    if counts.pmu == 0 {
        return Err(Error::InfeasibleAllocation(
            "the slack bus needs a PMU; pmu count is 0".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slack = net.slack_bus();
    let mut rest: Vec<BusId> = net.buses().iter().map(|b| b.id).filter(|&id| id != slack).collect();
    rest.shuffle(&mut rng);

    // Buses that can host neither RTU type go to PMUs first.
    let no_rtu = |b: &BusId| rules.no_injection_rtu.contains(b) && rules.no_flow_rtu.contains(b);
    rest.sort_by_key(|b| !no_rtu(b));
    let mut pmu = match published_pmu_sites(net, counts.pmu) {
        Some(sites) => sites,
        None => std::iter::once(slack)
            .chain(rest.iter().copied().take(counts.pmu - 1))
            .collect(),
    };
    pmu.sort_unstable();
    let pmu_set: BTreeSet<BusId> = pmu.iter().copied().collect();
    rest.retain(|b| !pmu_set.contains(b));
    rest.shuffle(&mut rng);

    let can_inj = |b: &BusId| !rules.no_injection_rtu.contains(b);
    let can_flow = |b: &BusId| !rules.no_flow_rtu.contains(b);
    let mut rtu_injection = Vec::new();
    let mut rtu_flow = Vec::new();
    let mut taken = BTreeSet::new();

    for &b in rest.iter().filter(|b| !can_inj(b) && can_flow(b)) {
        if rtu_flow.len() < counts.rtu_flow {
            rtu_flow.push(b);
            taken.insert(b);
        }
    }
    for &b in rest.iter().filter(|b| can_inj(b) && !can_flow(b)) {
        if rtu_injection.len() < counts.rtu_injection {
            rtu_injection.push(b);
            taken.insert(b);
        }
    }
    for &b in rest.iter().filter(|b| can_inj(b)) {
        if rtu_injection.len() < counts.rtu_injection && taken.insert(b) {
            rtu_injection.push(b);
        }
    }
    for &b in rest.iter().filter(|b| can_flow(b)) {
        if rtu_flow.len() < counts.rtu_flow && taken.insert(b) {
            rtu_flow.push(b);
        }
    }
    if rtu_injection.len() < counts.rtu_injection || rtu_flow.len() < counts.rtu_flow {
        return Err(Error::InfeasibleAllocation(format!(
            "only {} injection-RTU and {} flow-RTU sites are eligible; {} and {} requested",
            rtu_injection.len(),
            rtu_flow.len(),
            counts.rtu_injection,
            counts.rtu_flow
        )));
    }
    rtu_injection.sort_unstable();
    rtu_flow.sort_unstable();
    let alloc = MeasurementAllocation {
        pmu_mode: rules.pmu_mode,
        pmu,
        rtu_injection,
        rtu_flow,
    };
    alloc.validate(net)?;
    Ok(alloc)
}
