//! Linear state estimation on the equivalent circuit: PMU and RTU
//! subcircuits, a weighted least-squares objective and one KKT solve.

mod circuit;
mod index;
mod kkt;
mod objective;
mod rtu;

pub use circuit::{build_circuit, CircuitProgram, ConductanceSlots, ConductanceWeight, Residual, DEFAULT_G_PMU};
pub use index::{Part, RtuSource, Var, VariableIndex};
pub use kkt::{assemble_kkt, solve_kkt, KktSolution, KktSystem};
pub use objective::{build_objective, QuadraticObjective};
pub use rtu::{
    aggregate_flow_rtu, record_coefficients, rtu_measurement_coefficients, rtu_variances, rtu_weights, weight,
    RtuCoefficients, PF_FLOOR, W_MAX,
};

use crate::error::Result;
use crate::measurement::MeasurementSet;
use crate::network::{BusId, NetworkModel};
use serde::{Deserialize, Serialize};
use std::time::Instant;

pub const RESULT_SCHEMA: &str = "ecfse.result.v1";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Conductance of every PMU branch, p.u.
    pub g_pmu: f64,
    #[serde(default)]
    pub conductance_weight: ConductanceWeight,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            g_pmu: DEFAULT_G_PMU,
            conductance_weight: ConductanceWeight::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusEstimate {
    pub bus: BusId,
    pub v_re: f64,
    pub v_im: f64,
    pub magnitude: f64,
    /// Radians.
    pub angle: f64,
}

impl BusEstimate {
    pub fn from_rectangular(bus: BusId, v_re: f64, v_im: f64) -> Self {
        Self {
            bus,
            v_re,
            v_im,
            magnitude: v_re.hypot(v_im),
            angle: v_im.atan2(v_re),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub schema: String,
    pub case: String,
    pub rng_seed: u64,
    pub config: EstimatorConfig,
    pub unknowns: usize,
    pub constraints: usize,
    pub buses: Vec<BusEstimate>,
    /// Objective in measurement units.
    pub objective: f64,
    /// The KKT checks below are in the scaled system, objective divided by
    /// `objective_scale`.
    pub objective_scale: f64,
    pub kkt_residual: f64,
    pub stationarity: f64,
    pub feasibility: f64,
    /// Largest PMU conductance current magnitude.
    pub max_conductance_current: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve_seconds: Option<f64>,
}

impl EstimationResult {
    /// Rectangular estimate `[re₁, im₁, …]` in bus order.
    pub fn rectangular(&self) -> Vec<f64> {
        self.buses.iter().flat_map(|b| [b.v_re, b.v_im]).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// All intermediate products of one estimation.
#[derive(Clone, Debug)]
pub struct EstimationRun {
    pub config: EstimatorConfig,
    pub program: CircuitProgram,
    pub objective: QuadraticObjective,
    pub kkt: KktSystem,
    pub solution: KktSolution,
}

impl EstimationRun {
    pub fn new(net: &NetworkModel, meas: &MeasurementSet, cfg: &EstimatorConfig) -> Result<Self> {
        let program = build_circuit(net, meas, cfg)?;
        let objective = build_objective(program.index.len(), &program.residuals);
        let kkt = assemble_kkt(&objective, &program.constraints, &program.rhs);
        let labels = |i: usize| {
            if i < program.index.len() {
                program.index.var(i).to_string()
            } else {
                program.row_labels[i - program.index.len()].clone()
            }
        };
        let solution = solve_kkt(&kkt, &labels)?;
        Ok(Self {
            config: *cfg,
            program,
            objective,
            kkt,
            solution,
        })
    }

    /// Multipliers in the units of the unscaled objective.
    pub fn lambda(&self) -> Vec<f64> {
        self.solution.lambda.iter().map(|l| l * self.kkt.scale).collect()
    }

    pub fn result(&self, net: &NetworkModel, meas: &MeasurementSet) -> EstimationResult {
        let x = &self.solution.x;
        let max_conductance_current = self
            .program
            .conductances
            .iter()
            .map(|c| x[c.current].hypot(x[c.current + 1]))
            .fold(0.0, f64::max);
        EstimationResult {
            schema: RESULT_SCHEMA.to_string(),
            case: meas.case.clone(),
            rng_seed: meas.rng_seed,
            config: self.config,
            unknowns: self.kkt.n,
            constraints: self.kkt.m,
            buses: extract_state(net, &self.program, x),
            objective: self.objective.value(x),
            objective_scale: self.kkt.scale,
            kkt_residual: self.solution.residual,
            stationarity: self.solution.stationarity,
            feasibility: self.solution.feasibility,
            max_conductance_current,
            solve_seconds: None,
        }
    }
}

/// Bus voltages in rectangular and polar form.
pub fn extract_state(net: &NetworkModel, program: &CircuitProgram, x: &[f64]) -> Vec<BusEstimate> {
    net.buses()
        .iter()
        .zip(&program.bus_slots)
        .map(|(b, &s)| BusEstimate::from_rectangular(b.id, x[s], x[s + 1]))
        .collect()
}

/// Builds, assembles and solves; the result carries the wall-clock time.
pub fn estimate(net: &NetworkModel, meas: &MeasurementSet, cfg: &EstimatorConfig) -> Result<EstimationResult> {
    let start = Instant::now();
    let run = EstimationRun::new(net, meas, cfg)?;
    let mut result = run.result(net, meas);
    result.solve_seconds = Some(start.elapsed().as_secs_f64());
    Ok(result)
}
