//! Linear RTU model: a measured `(V, I, φ)` triple becomes two coefficients
//! that turn the bus voltage into the load current,
//! `I_R = c_G·V_R + c_B·V_I` and `I_I = c_G·V_I − c_B·V_R`.

use crate::error::{Error, Result};
use crate::measurement::{var_product, Channel, RtuReadingSample, RtuRecord};

/// Weight used when a variance vanishes.
pub const W_MAX: f64 = 1e12;

/// Magnitude floor for power-factor factors in variance propagation.
pub const PF_FLOOR: f64 = 1e-6;

/// Coefficients of one RTU site with their variances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RtuCoefficients {
    pub c_g: f64,
    pub c_b: f64,
    pub var_g: f64,
    pub var_b: f64,
}

impl RtuCoefficients {
    pub fn w_g(&self) -> f64 {
        weight(self.var_g)
    }

    pub fn w_b(&self) -> f64 {
        weight(self.var_b)
    }
}

/// Reciprocal variance, capped at [`W_MAX`].
pub fn weight(variance: f64) -> f64 {
    if variance > 1.0 / W_MAX {
        1.0 / variance
    } else {
        W_MAX
    }
}

/// `c_G = (I/V)·cos φ`, `c_B = (I/V)·sin φ`.
pub fn rtu_measurement_coefficients(v: f64, i: f64, phi: f64) -> Result<(f64, f64)> {
    if v <= 0.0 || !v.is_finite() {
        return Err(Error::InvalidMeasurement(format!(
            "RTU voltage must be positive, got {v}"
        )));
    }
    if i < 0.0 {
        return Err(Error::InvalidMeasurement(format!(
            "RTU current must be non-negative, got {i}"
        )));
    }
    let k = i / v;
    Ok((k * phi.cos(), k * phi.sin()))
}

/// Variances of `c_G` and `c_B` from the measured `V`, `I` and power factor.
/// `σ_s` for `s = √(1 − pf²)` is the first-order `|pf|/s·σ_pf`, bounded by
/// `√(2σ_pf)`, which is how far `s` moves when pf drops by σ_pf from 1.
pub fn rtu_variances(v: Channel, i: Channel, pf: Channel) -> Result<(f64, f64)> {
    let pf_abs = pf.value.abs().clamp(PF_FLOOR, 1.0);
    let s = (1.0 - pf_abs * pf_abs).sqrt().max(PF_FLOOR);
    let sigma_s = (pf_abs / s * pf.sigma).min((2.0 * pf.sigma).sqrt());
    let i_abs = i.value.abs().max(PF_FLOOR);
    let k = i_abs / v.value;
    let var_g = var_product(k * pf_abs, &[(i_abs, i.sigma), (v.value, v.sigma), (pf_abs, pf.sigma)])?;
    let var_b = var_product(k * s, &[(i_abs, i.sigma), (v.value, v.sigma), (s, sigma_s)])?;
    Ok((var_g, var_b))
}

/// Weights `(W_G, W_B)` from the measured values and their σ.
pub fn rtu_weights(v: Channel, i: Channel, pf: Channel) -> Result<(f64, f64)> {
    let (var_g, var_b) = rtu_variances(v, i, pf)?;
    Ok((weight(var_g), weight(var_b)))
}

fn reading_coefficients(v: Channel, r: &RtuReadingSample) -> Result<RtuCoefficients> {
    let (c_g, c_b) = rtu_measurement_coefficients(v.value, r.i.value, r.phi())?;
    let (var_g, var_b) = rtu_variances(v, r.i, r.pf)?;
    Ok(RtuCoefficients { c_g, c_b, var_g, var_b })
}

/// Sums per-line coefficients of a flow RTU into an injection equivalent;
/// variances add.
pub fn aggregate_flow_rtu(parts: &[RtuCoefficients]) -> RtuCoefficients {
    parts.iter().fold(
        RtuCoefficients {
            c_g: 0.0,
            c_b: 0.0,
            var_g: 0.0,
            var_b: 0.0,
        },
        |acc, p| RtuCoefficients {
            c_g: acc.c_g + p.c_g,
            c_b: acc.c_b + p.c_b,
            var_g: acc.var_g + p.var_g,
            var_b: acc.var_b + p.var_b,
        },
    )
}

/// Injection-equivalent coefficients of an RTU record of either mode.
pub fn record_coefficients(rec: &RtuRecord) -> Result<RtuCoefficients> {
    let parts = rec
        .readings
        .iter()
        .map(|r| reading_coefficients(rec.v, r))
        .collect::<Result<Vec<_>>>()?;
    if parts.is_empty() {
        return Err(Error::InvalidMeasurement(format!(
            "RTU at bus {} has no readings",
            rec.bus
        )));
    }
    Ok(aggregate_flow_rtu(&parts))
}
