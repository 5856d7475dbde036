//! Accuracy indices, Monte Carlo campaigns and comparison tables.

use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimationResult, EstimatorConfig};
use crate::measurement::{
    allocate, sample, AllocationRules, DeviceCounts, MeasurementAllocation, MeasurementSet, NoiseMode, PmuMode,
    RtuMode, StdDevConfig,
};
use crate::network::{BusId, NetworkModel};
use crate::powerflow::{
    rtu_ineligible_sites, solve_powerflow, true_measurands, ExactMeasurands, PowerInjections, TrueState,
    DEFAULT_MAX_ITER, DEFAULT_TOLERANCE,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const REPORT_SCHEMA: &str = "ecfse.report.v1";

fn check_lengths(x_hat: &[f64], x_true: &[f64]) -> Result<()> {
    if x_hat.len() != x_true.len() {
        return Err(Error::LengthMismatch {
            expected: x_true.len(),
            found: x_hat.len(),
        });
    }
    Ok(())
}

/// Sum of squared errors over all rectangular components.
pub fn index_sigma2(x_hat: &[f64], x_true: &[f64]) -> Result<f64> {
    check_lengths(x_hat, x_true)?;
    Ok(x_hat.iter().zip(x_true).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Largest absolute error of a single rectangular component.
pub fn index_sigmamax(x_hat: &[f64], x_true: &[f64]) -> Result<f64> {
    check_lengths(x_hat, x_true)?;
    Ok(x_hat.iter().zip(x_true).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub counts: DeviceCounts,
    pub std_dev: StdDevConfig,
    pub noise: NoiseMode,
    pub pmu_mode: PmuMode,
    pub estimator: EstimatorConfig,
    pub trials: usize,
    pub base_seed: u64,
    /// Worker threads; 1 runs the trials in order on the calling thread.
    #[serde(skip)]
    pub jobs: usize,
}

impl CampaignConfig {
    pub fn new(counts: DeviceCounts) -> Self {
        Self {
            counts,
            std_dev: StdDevConfig::default(),
            noise: NoiseMode::Uniform,
            pmu_mode: PmuMode::LineFlow,
            estimator: EstimatorConfig::default(),
            trials: 100,
            base_seed: 0,
            jobs: 1,
        }
    }
}

/// Operating point, allocation and exact measurands shared by all trials.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub truth: TrueState,
    pub allocation: MeasurementAllocation,
    pub exact: ExactMeasurands,
}

/// Solves the power flow and fails if it does not converge.
pub fn true_state(net: &NetworkModel) -> Result<TrueState> {
    let st = solve_powerflow(
        net,
        &PowerInjections::from_case(net),
        DEFAULT_TOLERANCE,
        DEFAULT_MAX_ITER,
    )?;
    if !st.converged {
        return Err(Error::NotConverged {
            iterations: st.iterations,
            max_mismatch: st.max_mismatch,
        });
    }
    Ok(st)
}

/// Site restrictions implied by the operating point.
pub fn allocation_rules(net: &NetworkModel, truth: &TrueState, pmu_mode: PmuMode) -> AllocationRules {
    let (no_injection_rtu, no_flow_rtu) = rtu_ineligible_sites(net, truth);
    AllocationRules {
        pmu_mode,
        no_injection_rtu,
        no_flow_rtu,
    }
}

impl Scenario {
    pub fn prepare(net: &NetworkModel, counts: DeviceCounts, pmu_mode: PmuMode, seed: u64) -> Result<Self> {
        let truth = true_state(net)?;
        let rules = allocation_rules(net, &truth, pmu_mode);
        let allocation = allocate(net, counts, seed, &rules)?;
        let exact = true_measurands(net, &truth, &allocation)?;
        Ok(Self {
            truth,
            allocation,
            exact,
        })
    }

    pub fn synthesize(
        &self,
        net: &NetworkModel,
        std_dev: &StdDevConfig,
        noise: NoiseMode,
        seed: u64,
    ) -> Result<MeasurementSet> {
        sample(&self.exact, &self.allocation, net.name(), std_dev, noise, seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub sigma2_x: f64,
    pub sigma_max: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve_seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub schema: String,
    pub case: String,
    pub bus_count: usize,
    pub config: CampaignConfig,
    pub allocation: MeasurementAllocation,
    pub mean_sigma2_x: f64,
    pub mean_sigma_max: f64,
    pub trials: Vec<TrialReport>,
}

impl CampaignReport {
    /// Drops wall-clock times so that reports compare byte for byte.
    pub fn strip_timing(&mut self) {
        for t in &mut self.trials {
            t.solve_seconds = None;
        }
    }

    pub fn total_solve_seconds(&self) -> f64 {
        self.trials.iter().filter_map(|t| t.solve_seconds).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per trial.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,seed,sigma2_x,sigma_max,objective,kkt_residual\n");
        for t in &self.trials {
            let _ = writeln!(
                out,
                "{},{},{:e},{:e},{:e},{:e}",
                t.trial, t.seed, t.sigma2_x, t.sigma_max, t.objective, t.kkt_residual
            );
        }
        out
    }
}

/// Synthesizes and estimates trial `trial` of a campaign.
pub fn run_trial(net: &NetworkModel, scenario: &Scenario, cfg: &CampaignConfig, trial: usize) -> Result<TrialReport> {
    let seed = cfg.base_seed.wrapping_add(trial as u64);
    let wrap = |e: Error| Error::Trial {
        trial,
        seed,
        source: Box::new(e),
    };
    let meas = scenario.synthesize(net, &cfg.std_dev, cfg.noise, seed).map_err(wrap)?;
    let result = estimate(net, &meas, &cfg.estimator).map_err(wrap)?;
    let x_hat = result.rectangular();
    let x_true = scenario.truth.rectangular();
    Ok(TrialReport {
        trial,
        seed,
        sigma2_x: index_sigma2(&x_hat, &x_true)?,
        sigma_max: index_sigmamax(&x_hat, &x_true)?,
        objective: result.objective,
        kkt_residual: result.kkt_residual,
        solve_seconds: result.solve_seconds,
    })
}

/// Runs `cfg.trials` trials on one allocation drawn from `cfg.base_seed`.
/// Trial `i` uses seed `base_seed + i`; aggregation is in trial order
/// regardless of `jobs`.
pub fn run_campaign(net: &NetworkModel, cfg: &CampaignConfig) -> Result<CampaignReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidMeasurement("a campaign needs at least one trial".into()));
    }
    let scenario = Scenario::prepare(net, cfg.counts, cfg.pmu_mode, cfg.base_seed)?;
    let trials: Vec<TrialReport> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::InvalidMeasurement(format!("cannot start {} workers: {e}", cfg.jobs)))?;
        let mut out = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|i| run_trial(net, &scenario, cfg, i))
                .collect::<Result<Vec<_>>>()
        })?;
        out.sort_by_key(|t| t.trial);
        out
    } else {
        (0..cfg.trials)
            .map(|i| run_trial(net, &scenario, cfg, i))
            .collect::<Result<Vec<_>>>()?
    };
    let n = trials.len() as f64;
    let mean_sigma2_x = trials.iter().map(|t| t.sigma2_x).sum::<f64>() / n;
    let mean_sigma_max = trials.iter().map(|t| t.sigma_max).sum::<f64>() / n;
    Ok(CampaignReport {
        schema: REPORT_SCHEMA.to_string(),
        case: net.name().to_string(),
        bus_count: net.bus_count(),
        config: cfg.clone(),
        allocation: scenario.allocation,
        mean_sigma2_x,
        mean_sigma_max,
        trials,
    })
}

/// Which device measured a bus voltage magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoltageSource {
    Pmu,
    Rtu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub bus: BusId,
    pub v_true: f64,
    pub v_est: f64,
    pub v_meas: Option<f64>,
    pub source: Option<VoltageSource>,
}

/// True, estimated and measured voltage magnitude per bus. PMU readings are
/// converted from rectangular to polar form.
pub fn emit_comparison(
    net: &NetworkModel,
    truth: &TrueState,
    meas: &MeasurementSet,
    result: &EstimationResult,
) -> Result<Vec<ComparisonRow>> {
    let mut measured: Vec<Option<(f64, VoltageSource)>> = vec![None; net.bus_count()];
    for p in &meas.pmu {
        measured[net.require_position(p.bus)?] = Some((p.v_re.value.hypot(p.v_im.value), VoltageSource::Pmu));
    }
    for r in &meas.rtu {
        measured[net.require_position(r.bus)?] = Some((r.v.value, VoltageSource::Rtu));
    }
    Ok(net
        .buses()
        .iter()
        .enumerate()
        .map(|(p, b)| ComparisonRow {
            bus: b.id,
            v_true: truth.v[p].norm(),
            v_est: result.buses[p].magnitude,
            v_meas: measured[p].map(|m| m.0),
            source: measured[p].map(|m| m.1),
        })
        .collect())
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("bus,v_true,v_est,v_meas,source\n");
    for r in rows {
        let meas = r.v_meas.map(|v| v.to_string()).unwrap_or_default();
        let source = match r.source {
            Some(VoltageSource::Pmu) => "pmu",
            Some(VoltageSource::Rtu) => "rtu",
            None => "",
        };
        let _ = writeln!(out, "{},{},{},{},{}", r.bus, r.v_true, r.v_est, meas, source);
    }
    out
}

/// Whether the estimate beats the raw reading at a strict majority of RTU
/// voltage sites.
pub fn estimate_beats_rtu_readings(rows: &[ComparisonRow]) -> bool {
    let (better, total) = rows
        .iter()
        .filter(|r| r.source == Some(VoltageSource::Rtu))
        .fold((0, 0), |(b, t), r| {
            let m = r.v_meas.expect("rtu rows carry a reading");
            let closer = (r.v_est - r.v_true).abs() < (m - r.v_true).abs();
            (b + usize::from(closer), t + 1)
        });
    2 * better > total
}

/// RTU mode of a bus in a measurement set, if any.
pub fn rtu_mode(meas: &MeasurementSet, bus: BusId) -> Option<RtuMode> {
    meas.rtu.iter().find(|r| r.bus == bus).map(|r| r.mode)
}
