use super::index::{RtuSource, Var, VariableIndex};
use super::rtu::{record_coefficients, weight, RtuCoefficients};
use super::EstimatorConfig;
use crate::error::{Error, Result};
use crate::measurement::{Channel, MeasurementSet, PmuMode, RtuMode};
use crate::network::{BranchEnd, BusId, NetworkModel};
use crate::sparse::{CscMatrix, TripletMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

pub const DEFAULT_G_PMU: f64 = 100.0;

/// Weight of the `I_GPMU` terms in the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConductanceWeight {
    /// Same weight as the PMU current channel in parallel with the
    /// conductance, `1/σ²`.
    #[default]
    Channel,
    /// Weight one; the conductance value alone sets the emphasis.
    Unit,
}

/// One weighted squared residual `w·(aᵀx − d)²`.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub terms: Vec<(usize, f64)>,
    pub target: f64,
    pub weight: f64,
}

impl Residual {
    fn unit(slot: usize, target: f64, weight: f64) -> Self {
        Self {
            terms: vec![(slot, 1.0)],
            target,
            weight,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>() - self.target
    }
}

/// Slots of a PMU conductance branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConductanceSlots {
    pub bus: BusId,
    pub branch: Option<usize>,
    /// `I_GPMU` real part; the imaginary part follows.
    pub current: usize,
    /// `I_PMU` real part.
    pub source: usize,
}

/// Linear equivalent circuit of one measurement set: the constraint system
/// `A·x = b` (KCL and device rows, real circuit then imaginary per row pair)
/// and the residual terms of the objective.
#[derive(Clone, Debug)]
pub struct CircuitProgram {
    pub index: VariableIndex,
    pub constraints: CscMatrix,
    pub rhs: Vec<f64>,
    pub row_labels: Vec<String>,
    pub residuals: Vec<Residual>,
    /// Slot of `V_BUS,R` for each bus position.
    pub bus_slots: Vec<usize>,
    /// Slot of `V_PMU,R` per PMU record.
    pub pmu_voltage_slots: Vec<usize>,
    pub conductances: Vec<ConductanceSlots>,
    /// Injection-equivalent coefficients per RTU record.
    pub rtu_coefficients: Vec<(BusId, RtuCoefficients)>,
    pub g_pmu: f64,
}

struct Rows {
    a: TripletMatrix,
    labels: Vec<String>,
}

impl Rows {
    /// Adds `y·V` of the node whose real slot is `col` to row pair `row`.
    fn stamp(&mut self, row: usize, col: usize, y: Complex64) {
        self.a.push(row, col, y.re);
        self.a.push(row, col + 1, -y.im);
        self.a.push(row + 1, col, y.im);
        self.a.push(row + 1, col + 1, y.re);
    }

    /// Adds `k·X` for a real-and-imaginary variable pair in both rows.
    fn pair(&mut self, row: usize, col: usize, k: f64) {
        self.a.push(row, col, k);
        self.a.push(row + 1, col + 1, k);
    }

    fn new_pair(&mut self, label: String) -> usize {
        let row = self.labels.len();
        self.labels.push(format!("{label}.R"));
        self.labels.push(format!("{label}.I"));
        self.a.set_nrows(self.labels.len());
        row
    }
}

fn channel_weight(c: &Channel) -> f64 {
    weight(c.sigma * c.sigma)
}

/// Builds the split real/imaginary MNA system with PMU and RTU subcircuits.
pub fn build_circuit(net: &NetworkModel, meas: &MeasurementSet, cfg: &EstimatorConfig) -> Result<CircuitProgram> {
    let g_pmu = cfg.g_pmu;
    if !(g_pmu > 0.0 && g_pmu.is_finite()) {
        return Err(Error::InvalidMeasurement(format!(
            "PMU conductance must be positive, got {g_pmu}"
        )));
    }
    meas.validate(net)?;
    let flow_pmu = meas.allocation.pmu_mode == PmuMode::LineFlow;
    let flow_rtu: HashSet<BusId> = meas.allocation.rtu_flow.iter().copied().collect();

    let mut index = VariableIndex::default();
    let bus_slots: Vec<usize> = net
        .buses()
        .iter()
        .map(|b| index.push_pair(|part| Var::BusV { bus: b.id, part }))
        .collect();

    // Terminal nodes behind flow-mode PMU channels. Unmonitored lines stay
    // on the bus node, which is the voltage-source node.
    let mut terminal: HashMap<(usize, BranchEnd), usize> = HashMap::new();
    let mut terminal_labels = Vec::new();
    if flow_pmu {
        for rec in &meas.pmu {
            let pos = net.require_position(rec.bus)?;
            for &(k, end) in net.incident(pos) {
                if !rec.currents.iter().any(|c| c.branch == Some(k)) {
                    continue;
                }
                let slot = index.push_pair(|part| Var::TerminalV {
                    bus: rec.bus,
                    branch: k,
                    part,
                });
                terminal.insert((k, end), slot);
                terminal_labels.push(format!("KCL[T{}/br{k}]", rec.bus));
            }
        }
    }
    let pmu_voltage_slots: Vec<usize> = meas
        .pmu
        .iter()
        .map(|r| index.push_pair(|part| Var::PmuV { bus: r.bus, part }))
        .collect();
    let pmu_current_slots: Vec<Vec<usize>> = meas
        .pmu
        .iter()
        .map(|r| {
            r.currents
                .iter()
                .map(|c| {
                    index.push_pair(|part| Var::PmuI {
                        bus: r.bus,
                        branch: c.branch,
                        part,
                    })
                })
                .collect()
        })
        .collect();
    let rtu_slots: Vec<usize> = meas
        .rtu
        .iter()
        .map(|r| {
            let first = index.push(Var::Rtu {
                bus: r.bus,
                source: RtuSource::GR,
            });
            for source in [RtuSource::BR, RtuSource::GI, RtuSource::BI] {
                index.push(Var::Rtu { bus: r.bus, source });
            }
            first
        })
        .collect();
    let conductance_slots: Vec<Vec<usize>> = meas
        .pmu
        .iter()
        .map(|r| {
            r.currents
                .iter()
                .map(|c| {
                    index.push_pair(|part| Var::PmuG {
                        bus: r.bus,
                        branch: c.branch,
                        part,
                    })
                })
                .collect()
        })
        .collect();
    let source_slots: Vec<usize> = meas
        .pmu
        .iter()
        .map(|r| index.push_pair(|part| Var::SourceI { bus: r.bus, part }))
        .collect();
    debug_assert!(index.is_bijective());

    // KCL row pairs share numbering with node voltage slots: bus p at 2p,
    // terminals right after the buses.
    let mut rows = Rows {
        a: TripletMatrix::new(0, index.len()),
        labels: Vec::new(),
    };
    for b in net.buses() {
        rows.new_pair(format!("KCL[{}]", b.id));
    }
    for label in terminal_labels {
        rows.new_pair(label);
    }

    for (k, br) in net.branches().iter().enumerate() {
        let node = |bus: BusId, end: BranchEnd| -> usize {
            terminal
                .get(&(k, end))
                .copied()
                .unwrap_or_else(|| bus_slots[net.position(bus).expect("validated endpoint")])
        };
        let f = node(br.from_bus, BranchEnd::From);
        let t = node(br.to_bus, BranchEnd::To);
        let tp = br.two_port();
        rows.stamp(f, f, tp.ff);
        rows.stamp(f, t, tp.ft);
        rows.stamp(t, f, tp.tf);
        rows.stamp(t, t, tp.tt);
    }
    for (p, b) in net.buses().iter().enumerate() {
        // A flow RTU's line currents already include the shunt current.
        if !flow_rtu.contains(&b.id) {
            rows.stamp(bus_slots[p], bus_slots[p], b.shunt());
        }
    }

    let mut residuals = Vec::new();
    let mut conductances = Vec::new();
    for (r, rec) in meas.pmu.iter().enumerate() {
        let pos = net.require_position(rec.bus)?;
        let kcl = bus_slots[pos];
        let v_bus = bus_slots[pos];
        let v_pmu = pmu_voltage_slots[r];
        let i_v = source_slots[r];
        match meas.allocation.pmu_mode {
            PmuMode::Injection => {
                let i_pmu = pmu_current_slots[r][0];
                let i_g = conductance_slots[r][0];
                rows.pair(kcl, i_pmu, -1.0);
                rows.pair(kcl, i_g, -1.0);
                let row = rows.new_pair(format!("G[{}]", rec.bus));
                rows.pair(row, i_g, 1.0);
                rows.pair(row, v_pmu, -g_pmu);
                rows.pair(row, v_bus, g_pmu);
                let row = rows.new_pair(format!("SRC[{}]", rec.bus));
                rows.pair(row, i_v, 1.0);
                rows.pair(row, i_pmu, -1.0);
                rows.pair(row, i_g, -1.0);
            }
            PmuMode::LineFlow => {
                rows.pair(kcl, i_v, -1.0);
                let row = rows.new_pair(format!("TIE[{}]", rec.bus));
                rows.pair(row, v_pmu, 1.0);
                rows.pair(row, v_bus, -1.0);
                for (c, ch) in rec.currents.iter().enumerate() {
                    let k = ch.branch.expect("flow channel names its branch");
                    let end = if net.branches()[k].from_bus == rec.bus {
                        BranchEnd::From
                    } else {
                        BranchEnd::To
                    };
                    let v_t = terminal[&(k, end)];
                    let i_pmu = pmu_current_slots[r][c];
                    let i_g = conductance_slots[r][c];
                    rows.pair(kcl, i_pmu, 1.0);
                    rows.pair(kcl, i_g, 1.0);
                    rows.pair(v_t, i_pmu, -1.0);
                    rows.pair(v_t, i_g, -1.0);
                    let row = rows.new_pair(format!("G[{}/br{k}]", rec.bus));
                    rows.pair(row, i_g, 1.0);
                    rows.pair(row, v_pmu, -g_pmu);
                    rows.pair(row, v_t, g_pmu);
                }
            }
        }

        residuals.push(Residual::unit(v_pmu, rec.v_re.value, channel_weight(&rec.v_re)));
        residuals.push(Residual::unit(v_pmu + 1, rec.v_im.value, channel_weight(&rec.v_im)));
        for (c, ch) in rec.currents.iter().enumerate() {
            let i_pmu = pmu_current_slots[r][c];
            let i_g = conductance_slots[r][c];
            residuals.push(Residual::unit(i_pmu, ch.re.value, channel_weight(&ch.re)));
            residuals.push(Residual::unit(i_pmu + 1, ch.im.value, channel_weight(&ch.im)));
            let (w_re, w_im) = match cfg.conductance_weight {
                ConductanceWeight::Channel => (channel_weight(&ch.re), channel_weight(&ch.im)),
                ConductanceWeight::Unit => (1.0, 1.0),
            };
            residuals.push(Residual::unit(i_g, 0.0, w_re));
            residuals.push(Residual::unit(i_g + 1, 0.0, w_im));
            conductances.push(ConductanceSlots {
                bus: rec.bus,
                branch: ch.branch,
                current: i_g,
                source: i_pmu,
            });
        }
    }

    let mut rtu_coefficients = Vec::with_capacity(meas.rtu.len());
    for (r, rec) in meas.rtu.iter().enumerate() {
        let pos = net.require_position(rec.bus)?;
        let kcl = bus_slots[pos];
        let (v_r, v_i) = (bus_slots[pos], bus_slots[pos] + 1);
        let (gr, br, gi, bi) = (rtu_slots[r], rtu_slots[r] + 1, rtu_slots[r] + 2, rtu_slots[r] + 3);
        rows.a.push(kcl, gr, 1.0);
        rows.a.push(kcl, br, 1.0);
        rows.a.push(kcl + 1, gi, 1.0);
        rows.a.push(kcl + 1, bi, -1.0);

        let co = record_coefficients(rec)?;
        debug_assert!(rec.mode == RtuMode::Flow || rec.readings.len() == 1);
        let (w_g, w_b) = (co.w_g(), co.w_b());
        for (src, v, c, w) in [
            (gr, v_r, co.c_g, w_g),
            (br, v_i, co.c_b, w_b),
            (gi, v_i, co.c_g, w_g),
            (bi, v_r, co.c_b, w_b),
        ] {
            residuals.push(Residual {
                terms: vec![(src, 1.0), (v, -c)],
                target: 0.0,
                weight: w,
            });
        }
        rtu_coefficients.push((rec.bus, co));
    }

    let m = rows.labels.len();
    debug_assert_eq!(rows.a.nrows(), m);
    Ok(CircuitProgram {
        index,
        constraints: rows.a.to_csc(),
        rhs: vec![0.0; m],
        row_labels: rows.labels,
        residuals,
        bus_slots,
        pmu_voltage_slots,
        conductances,
        rtu_coefficients,
        g_pmu,
    })
}
