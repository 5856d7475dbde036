use super::TrueState;
use crate::error::{Error, Result};
use crate::measurement::{MeasurementAllocation, PmuMode};
use crate::network::{build_bus_admittance, BranchEnd, BusId, NetworkModel};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::PI;

/// Below this current magnitude a power factor is undefined.
pub const MIN_RTU_CURRENT: f64 = 1e-9;

/// One PMU current channel. `branch` is `None` for the bus injection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurrentChannel {
    pub branch: Option<usize>,
    pub current: Complex64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmuExact {
    pub bus: BusId,
    pub mode: PmuMode,
    pub voltage: Complex64,
    pub channels: Vec<CurrentChannel>,
}

/// Magnitudes and power-factor angle seen by a conventional meter.
/// `phi = arg(v) - arg(i)`, positive for lagging current.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RtuReading {
    pub branch: Option<usize>,
    pub v: f64,
    pub i: f64,
    pub phi: f64,
    /// The phasor this reading was taken from, kept for oracles.
    pub current: Complex64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RtuExact {
    pub bus: BusId,
    pub readings: Vec<RtuReading>,
}

/// Noise-free measurands for an allocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactMeasurands {
    pub pmu: Vec<PmuExact>,
    pub rtu_injection: Vec<RtuExact>,
    pub rtu_flow: Vec<RtuExact>,
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Current leaving the bus at `end` of branch `k` into the branch.
pub(crate) fn branch_current_leaving(net: &NetworkModel, v: &[Complex64], k: usize, end: BranchEnd) -> Complex64 {
    let br = &net.branches()[k];
    let f = net.position(br.from_bus).expect("validated endpoint");
    let t = net.position(br.to_bus).expect("validated endpoint");
    let tp = br.two_port();
    match end {
        BranchEnd::From => tp.from_current(v[f], v[t]),
        BranchEnd::To => tp.to_current(v[f], v[t]),
    }
}

/// Current drawn by the load at each bus, `-(Y·V)`, shunts included in `Y`.
pub(crate) fn load_currents(net: &NetworkModel, v: &[Complex64]) -> Vec<Complex64> {
    build_bus_admittance(net).mul_vec(v).into_iter().map(|i| -i).collect()
}

fn reading(bus: BusId, branch: Option<usize>, v: Complex64, i: Complex64) -> Result<RtuReading> {
    if i.norm() < MIN_RTU_CURRENT {
        return Err(Error::UndefinedPowerFactor { bus, current: i.norm() });
    }
    Ok(RtuReading {
        branch,
        v: v.norm(),
        i: i.norm(),
        phi: wrap_angle(v.arg() - i.arg()),
        current: i,
    })
}

/// Buses that cannot host an injection RTU or a flow RTU because a current
/// they would meter is (numerically) zero.
pub fn rtu_ineligible_sites(net: &NetworkModel, state: &TrueState) -> (BTreeSet<BusId>, BTreeSet<BusId>) {
    let loads = load_currents(net, &state.v);
    let mut injection = BTreeSet::new();
    let mut flow = BTreeSet::new();
    for (pos, bus) in net.buses().iter().enumerate() {
        if loads[pos].norm() < MIN_RTU_CURRENT {
            injection.insert(bus.id);
        }
        let dead_line = net
            .incident(pos)
            .iter()
            .any(|&(k, end)| branch_current_leaving(net, &state.v, k, end).norm() < MIN_RTU_CURRENT);
        if dead_line {
            flow.insert(bus.id);
        }
    }
    (injection, flow)
}

/// Exact values of every quantity the allocated devices would measure.
pub fn true_measurands(
    net: &NetworkModel,
    state: &TrueState,
    alloc: &MeasurementAllocation,
) -> Result<ExactMeasurands> {
    if state.v.len() != net.bus_count() {
        return Err(Error::LengthMismatch {
            expected: net.bus_count(),
            found: state.v.len(),
        });
    }
    let v = &state.v;
    let injections: Vec<Complex64> = load_currents(net, v).into_iter().map(|i| -i).collect();

    let mut pmu = Vec::with_capacity(alloc.pmu.len());
    for &bus in &alloc.pmu {
        let pos = net.require_position(bus)?;
        let channels = match alloc.pmu_mode {
            PmuMode::Injection => vec![CurrentChannel {
                branch: None,
                current: injections[pos],
            }],
            PmuMode::LineFlow => net
                .incident(pos)
                .iter()
                .map(|&(k, end)| CurrentChannel {
                    branch: Some(k),
                    current: branch_current_leaving(net, v, k, end),
                })
                .collect(),
        };
        pmu.push(PmuExact {
            bus,
            mode: alloc.pmu_mode,
            voltage: v[pos],
            channels,
        });
    }

    let mut rtu_injection = Vec::with_capacity(alloc.rtu_injection.len());
    for &bus in &alloc.rtu_injection {
        let pos = net.require_position(bus)?;
        rtu_injection.push(RtuExact {
            bus,
            readings: vec![reading(bus, None, v[pos], -injections[pos])?],
        });
    }

    let mut rtu_flow = Vec::with_capacity(alloc.rtu_flow.len());
    for &bus in &alloc.rtu_flow {
        let pos = net.require_position(bus)?;
        let readings = net
            .incident(pos)
            .iter()
            .map(|&(k, end)| reading(bus, Some(k), v[pos], -branch_current_leaving(net, v, k, end)))
            .collect::<Result<Vec<_>>>()?;
        rtu_flow.push(RtuExact { bus, readings });
    }

    Ok(ExactMeasurands {
        pmu,
        rtu_injection,
        rtu_flow,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::{bus, line};
    use crate::network::BusKind;
    use approx::assert_relative_eq;

    fn fixed_state(net: &NetworkModel, v: Vec<Complex64>) -> TrueState {
        TrueState::from_voltages(net, v).unwrap()
    }

    #[test]
    fn lagging_load_has_positive_angle() {
        // V = 1∠0 and a load drawing 0.3 - j0.4: P = 0.3, Q = 0.4 lagging.
        let r = reading(2, None, Complex64::new(1.0, 0.0), Complex64::new(0.3, -0.4)).unwrap();
        assert_relative_eq!(r.i, 0.5, epsilon = 1e-15);
        assert_relative_eq!(r.phi.cos(), 0.6, epsilon = 1e-15);
        assert!(r.phi > 0.0);
    }

    #[test]
    fn zero_current_is_rejected() {
        let err = reading(7, None, Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::UndefinedPowerFactor { bus: 7, .. }));
    }

    #[test]
    fn flow_readings_sum_to_load_plus_shunt() {
        let mut b2 = bus(2, BusKind::Pq);
        b2.shunt_b = 0.05;
        let net = NetworkModel::new(
            "t",
            100.0,
            vec![bus(1, BusKind::Slack), b2, bus(3, BusKind::Pq)],
            vec![line(1, 2, 0.01, 0.1, 0.02), line(2, 3, 0.02, 0.2, 0.0)],
            vec![],
        )
        .unwrap();
        let v = vec![
            Complex64::new(1.0, 0.0),
            Complex64::from_polar(0.97, -0.05),
            Complex64::from_polar(0.95, -0.08),
        ];
        let st = fixed_state(&net, v.clone());
        let alloc = MeasurementAllocation {
            pmu_mode: PmuMode::LineFlow,
            pmu: vec![1],
            rtu_injection: vec![2],
            rtu_flow: vec![2],
        };
        let m = true_measurands(&net, &st, &alloc).unwrap();
        let flow_sum: Complex64 = m.rtu_flow[0].readings.iter().map(|r| r.current).sum();
        let load = m.rtu_injection[0].readings[0].current;
        let shunt_current = net.buses()[1].shunt() * v[1];
        assert_relative_eq!((flow_sum - (load + shunt_current)).norm(), 0.0, epsilon = 1e-13);
        assert_eq!(m.pmu[0].channels.len(), 1);
        assert_eq!(m.pmu[0].channels[0].branch, Some(0));
    }

    #[test]
    fn angle_wraps_into_half_open_interval() {
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_relative_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
    }
}
