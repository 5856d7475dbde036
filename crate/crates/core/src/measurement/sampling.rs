use super::{MeasurementAllocation, PmuMode};
use crate::error::{Error, Result};
use crate::network::{BusId, NetworkModel};
use crate::powerflow::ExactMeasurands;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const MEASUREMENT_SCHEMA: &str = "ecfse.measurements.v1";

/// Channels smaller than this (p.u.) take their σ from this floor instead.
pub const NEAR_ZERO: f64 = 0.01;

/// Relative standard deviations per channel type.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StdDevConfig {
    pub rtu_v_rel: f64,
    pub rtu_i_rel: f64,
    pub rtu_pf_rel: f64,
    pub pmu_v_rel: f64,
    pub pmu_i_rel: f64,
}

impl Default for StdDevConfig {
    fn default() -> Self {
        Self {
            rtu_v_rel: 0.004,
            rtu_i_rel: 0.004,
            rtu_pf_rel: 0.005,
            pmu_v_rel: 0.0002,
            pmu_i_rel: 0.0002,
        }
    }
}

impl StdDevConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.rtu_v_rel,
            self.rtu_i_rel,
            self.rtu_pf_rel,
            self.pmu_v_rel,
            self.pmu_i_rel,
        ];
        if all.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidMeasurement(format!(
                "standard deviations must be positive: {self:?}"
            )))
        }
    }

    /// Every relative σ multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rtu_v_rel: self.rtu_v_rel * factor,
            rtu_i_rel: self.rtu_i_rel * factor,
            rtu_pf_rel: self.rtu_pf_rel * factor,
            pmu_v_rel: self.pmu_v_rel * factor,
            pmu_i_rel: self.pmu_i_rel * factor,
        }
    }
}

/// How measured values are drawn around the true value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Uniform on `[t − σ, t + σ]`.
    #[default]
    Uniform,
    Gaussian,
    /// Values equal the truth; σ is still recorded for the weights.
    None,
}

/// A measured value with its standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub value: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmuCurrent {
    /// Monitored branch, or `None` for the bus injection.
    pub branch: Option<usize>,
    pub re: Channel,
    pub im: Channel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmuRecord {
    pub bus: BusId,
    pub v_re: Channel,
    pub v_im: Channel,
    pub currents: Vec<PmuCurrent>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RtuMode {
    Injection,
    Flow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RtuReadingSample {
    pub branch: Option<usize>,
    pub i: Channel,
    /// Power factor `cos φ`.
    pub pf: Channel,
    /// `+1` for lagging (φ ≥ 0), `−1` for leading.
    pub phi_sign: f64,
}

impl RtuReadingSample {
    /// Measured power-factor angle, `sign·acos(pf)`.
    pub fn phi(&self) -> f64 {
        self.phi_sign * self.pf.value.clamp(-1.0, 1.0).acos()
    }
}

/// One RTU site. A flow RTU shares a single voltage reading across its lines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RtuRecord {
    pub bus: BusId,
    pub mode: RtuMode,
    pub v: Channel,
    pub readings: Vec<RtuReadingSample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub schema: String,
    pub case: String,
    pub rng_seed: u64,
    pub noise: NoiseMode,
    pub std_dev: StdDevConfig,
    pub allocation: MeasurementAllocation,
    pub pmu: Vec<PmuRecord>,
    pub rtu: Vec<RtuRecord>,
}

impl MeasurementSet {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text)?;
        if set.schema != MEASUREMENT_SCHEMA {
            return Err(Error::InvalidMeasurement(format!(
                "unsupported schema {:?}, expected {MEASUREMENT_SCHEMA:?}",
                set.schema
            )));
        }
        Ok(set)
    }

    /// Checks σ positivity and that records match the allocation and the
    /// network. Flow RTUs cover all incident lines; flow PMUs a subset.
    pub fn validate(&self, net: &NetworkModel) -> Result<()> {
        self.allocation.validate(net)?;
        let bad = |what: String| Err(Error::InvalidMeasurement(what));
        let check = |c: &Channel, what: &str, bus: BusId| -> Result<()> {
            if c.sigma.is_finite() && c.sigma > 0.0 && c.value.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidMeasurement(format!("{what} at bus {bus}: {c:?}")))
            }
        };
        let lines_of = |bus: BusId| -> Result<Vec<Option<usize>>> {
            let pos = net.require_position(bus)?;
            Ok(net.incident(pos).iter().map(|&(k, _)| Some(k)).collect())
        };

        let pmu_buses: Vec<BusId> = self.pmu.iter().map(|r| r.bus).collect();
        if pmu_buses != self.allocation.pmu {
            return bad(format!(
                "PMU records {pmu_buses:?} do not match allocation {:?}",
                self.allocation.pmu
            ));
        }
        for r in &self.pmu {
            check(&r.v_re, "PMU voltage", r.bus)?;
            check(&r.v_im, "PMU voltage", r.bus)?;
            let branches: Vec<Option<usize>> = r.currents.iter().map(|c| c.branch).collect();
            // A flow-mode PMU may leave lines unmonitored; the channels it
            // has must follow the incidence order.
            let ok = match self.allocation.pmu_mode {
                PmuMode::Injection => branches == [None],
                PmuMode::LineFlow => {
                    let mut lines = lines_of(r.bus)?.into_iter();
                    branches.iter().all(|b| lines.any(|l| l == *b))
                }
            };
            if !ok {
                return bad(format!("PMU at bus {} has unexpected channels {branches:?}", r.bus));
            }
            for c in &r.currents {
                check(&c.re, "PMU current", r.bus)?;
                check(&c.im, "PMU current", r.bus)?;
            }
        }

        let sites =
            |mode: RtuMode| -> Vec<BusId> { self.rtu.iter().filter(|r| r.mode == mode).map(|r| r.bus).collect() };
        if sites(RtuMode::Injection) != self.allocation.rtu_injection
            || sites(RtuMode::Flow) != self.allocation.rtu_flow
        {
            return bad("RTU records do not match the allocation".into());
        }
        for r in &self.rtu {
            check(&r.v, "RTU voltage", r.bus)?;
            let branches: Vec<Option<usize>> = r.readings.iter().map(|x| x.branch).collect();
            let expected = match r.mode {
                RtuMode::Injection => vec![None],
                RtuMode::Flow => lines_of(r.bus)?,
            };
            if branches != expected {
                return bad(format!(
                    "RTU at bus {} has readings {branches:?}, expected {expected:?}",
                    r.bus
                ));
            }
            for x in &r.readings {
                check(&x.i, "RTU current", r.bus)?;
                check(&x.pf, "RTU power factor", r.bus)?;
                if x.phi_sign.abs() != 1.0 {
                    return bad(format!("RTU at bus {}: phi_sign must be ±1", r.bus));
                }
            }
        }
        Ok(())
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    mode: NoiseMode,
}

impl Sampler {
    fn draw(&mut self, t: f64, sigma: f64) -> f64 {
        match self.mode {
            NoiseMode::Uniform => t + sigma * self.rng.random_range(-1.0..=1.0),
            NoiseMode::Gaussian => {
                let z: f64 = self.rng.sample(StandardNormal);
                t + sigma * z
            }
            NoiseMode::None => t,
        }
    }

    fn channel(&mut self, t: f64, sigma: f64) -> Channel {
        Channel {
            value: self.draw(t, sigma),
            sigma,
        }
    }
}

fn rel_sigma(rel: f64, magnitude: f64) -> f64 {
    rel * magnitude.abs().max(NEAR_ZERO)
}

/// Draws one noisy measurement set from exact measurands. Draw order is
/// fixed (PMUs, injection RTUs, flow RTUs; within each in record order), so
/// a seed reproduces the set exactly.
pub fn sample(
    exact: &ExactMeasurands,
    alloc: &MeasurementAllocation,
    case: &str,
    cfg: &StdDevConfig,
    mode: NoiseMode,
    seed: u64,
) -> Result<MeasurementSet> {
    cfg.validate()?;
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(seed),
        mode,
    };

    let pmu = exact
        .pmu
        .iter()
        .map(|p| {
            let sv = rel_sigma(cfg.pmu_v_rel, p.voltage.norm());
            let v_re = s.channel(p.voltage.re, sv);
            let v_im = s.channel(p.voltage.im, sv);
            let currents = p
                .channels
                .iter()
                .map(|c| {
                    let si = rel_sigma(cfg.pmu_i_rel, c.current.norm());
                    PmuCurrent {
                        branch: c.branch,
                        re: s.channel(c.current.re, si),
                        im: s.channel(c.current.im, si),
                    }
                })
                .collect();
            PmuRecord {
                bus: p.bus,
                v_re,
                v_im,
                currents,
            }
        })
        .collect();

    let mut rtu = Vec::with_capacity(exact.rtu_injection.len() + exact.rtu_flow.len());
    let tagged = exact
        .rtu_injection
        .iter()
        .map(|r| (r, RtuMode::Injection))
        .chain(exact.rtu_flow.iter().map(|r| (r, RtuMode::Flow)));
    for (r, rtu_mode) in tagged {
        let Some(first) = r.readings.first() else {
            return Err(Error::InvalidMeasurement(format!(
                "RTU at bus {} has no readings",
                r.bus
            )));
        };
        let v_true = first.v;
        let v = s.channel(v_true, rel_sigma(cfg.rtu_v_rel, v_true));
        let v = Channel {
            value: v.value.abs(),
            ..v
        };
        let readings = r
            .readings
            .iter()
            .map(|x| {
                let i = s.channel(x.i, rel_sigma(cfg.rtu_i_rel, x.i));
                let pf_true = x.phi.cos();
                let pf = s.channel(pf_true, rel_sigma(cfg.rtu_pf_rel, pf_true));
                RtuReadingSample {
                    branch: x.branch,
                    i: Channel {
                        value: i.value.abs(),
                        ..i
                    },
                    pf: Channel {
                        value: pf.value.clamp(-1.0, 1.0),
                        ..pf
                    },
                    phi_sign: if x.phi < 0.0 { -1.0 } else { 1.0 },
                }
            })
            .collect();
        rtu.push(RtuRecord {
            bus: r.bus,
            mode: rtu_mode,
            v,
            readings,
        });
    }

    Ok(MeasurementSet {
        schema: MEASUREMENT_SCHEMA.to_string(),
        case: case.to_string(),
        rng_seed: seed,
        noise: mode,
        std_dev: *cfg,
        allocation: alloc.clone(),
        pmu,
        rtu,
    })
}
