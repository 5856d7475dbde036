//! Conventional polar Newton-Raphson power flow. Its converged solution is
//! the "true" operating point from which measurements are synthesized.

mod measurands;

pub use measurands::{
    rtu_ineligible_sites, true_measurands, CurrentChannel, ExactMeasurands, PmuExact, RtuExact, RtuReading,
    MIN_RTU_CURRENT,
};

use crate::error::{Error, Result};
use crate::network::{build_bus_admittance, AdmittanceMatrix, BusId, BusKind, NetworkModel};
use crate::sparse::{norm_inf, SparseLu, TripletMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 30;

/// Specified injections per bus position (generation minus load, p.u.).
#[derive(Clone, Debug, PartialEq)]
pub struct PowerInjections {
    pub kinds: Vec<BusKind>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Voltage magnitude set point for slack and PV buses.
    pub v_set: Vec<f64>,
}

impl PowerInjections {
    /// Generation table minus load. PV buses with no in-service generator
    /// are demoted to PQ; reactive limits are not enforced.
    pub fn from_case(net: &NetworkModel) -> Self {
        let n = net.bus_count();
        let mut p: Vec<f64> = net.buses().iter().map(|b| -b.load_p).collect();
        let mut q: Vec<f64> = net.buses().iter().map(|b| -b.load_q).collect();
        let mut v_set: Vec<f64> = net.buses().iter().map(|b| b.vm).collect();
        let mut has_gen = vec![false; n];
        for g in net.generators().iter().filter(|g| g.in_service) {
            let pos = net.position(g.bus).expect("validated generator bus");
            p[pos] += g.p;
            q[pos] += g.q;
            if !has_gen[pos] {
                v_set[pos] = g.v_set;
                has_gen[pos] = true;
            }
        }
        let kinds = net
            .buses()
            .iter()
            .zip(&has_gen)
            .map(|(b, &gen)| match b.kind {
                BusKind::Pv if !gen => {
                    log::info!("bus {} has no in-service generator; treated as PQ", b.id);
                    BusKind::Pq
                }
                kind => kind,
            })
            .collect();
        Self { kinds, p, q, v_set }
    }
}

/// Converged (or not) operating point, one rectangular voltage per bus
/// position. The slack angle is exactly zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueState {
    pub bus_ids: Vec<BusId>,
    pub v: Vec<Complex64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
    pub tolerance: f64,
}

impl TrueState {
    /// Rectangular state vector `[re₁, im₁, re₂, im₂, …]` of length 2N.
    pub fn rectangular(&self) -> Vec<f64> {
        self.v.iter().flat_map(|v| [v.re, v.im]).collect()
    }

    /// Builds a state from known voltages (no power-flow solve).
    pub fn from_voltages(net: &NetworkModel, v: Vec<Complex64>) -> Result<Self> {
        if v.len() != net.bus_count() {
            return Err(Error::LengthMismatch {
                expected: net.bus_count(),
                found: v.len(),
            });
        }
        Ok(Self {
            bus_ids: net.buses().iter().map(|b| b.id).collect(),
            v,
            converged: true,
            iterations: 0,
            max_mismatch: 0.0,
            tolerance: 0.0,
        })
    }
}

/// Complex power injected at each bus, `S = V ∘ conj(Y·V)`.
pub fn power_injections(y: &AdmittanceMatrix, v: &[Complex64]) -> Vec<Complex64> {
    y.mul_vec(v).iter().zip(v).map(|(i, v)| v * i.conj()).collect()
}

fn mismatch(y: &AdmittanceMatrix, v: &[Complex64], inj: &PowerInjections, pvpq: &[usize], pq: &[usize]) -> Vec<f64> {
    let s = power_injections(y, v);
    pvpq.iter()
        .map(|&i| s[i].re - inj.p[i])
        .chain(pq.iter().map(|&i| s[i].im - inj.q[i]))
        .collect()
}

fn jacobian(
    y: &AdmittanceMatrix,
    v: &[Complex64],
    pvpq: &[usize],
    pq: &[usize],
    col_angle: &[Option<usize>],
    col_mag: &[Option<usize>],
) -> TripletMatrix {
    let n_vars = pvpq.len() + pq.len();
    let current = y.mul_vec(v);
    let vn: Vec<Complex64> = v.iter().map(|x| x / x.norm()).collect();
    let j = Complex64::new(0.0, 1.0);
    let mut jac = TripletMatrix::new(n_vars, n_vars);

    // Row blocks: ΔP over pvpq, then ΔQ over pq.
    let row_p: Vec<Option<usize>> = {
        let mut r = vec![None; v.len()];
        for (k, &i) in pvpq.iter().enumerate() {
            r[i] = Some(k);
        }
        r
    };
    let row_q: Vec<Option<usize>> = {
        let mut r = vec![None; v.len()];
        for (k, &i) in pq.iter().enumerate() {
            r[i] = Some(pvpq.len() + k);
        }
        r
    };

    for i in 0..v.len() {
        if row_p[i].is_none() && row_q[i].is_none() {
            continue;
        }
        let y_ii = y.get(i, i);
        let mut entries: Vec<(usize, Complex64, Complex64)> = y
            .row(i)
            .iter()
            .filter(|&&(k, _)| k != i)
            .map(|&(k, y_ik)| (k, -j * v[i] * (y_ik * v[k]).conj(), v[i] * (y_ik * vn[k]).conj()))
            .collect();
        entries.push((
            i,
            j * v[i] * (current[i] - y_ii * v[i]).conj(),
            v[i] * (y_ii * vn[i]).conj() + current[i].conj() * vn[i],
        ));
        for (k, ds_da, ds_dm) in entries {
            if let Some(r) = row_p[i] {
                if let Some(c) = col_angle[k] {
                    jac.push(r, c, ds_da.re);
                }
                if let Some(c) = col_mag[k] {
                    jac.push(r, c, ds_dm.re);
                }
            }
            if let Some(r) = row_q[i] {
                if let Some(c) = col_angle[k] {
                    jac.push(r, c, ds_da.im);
                }
                if let Some(c) = col_mag[k] {
                    jac.push(r, c, ds_dm.im);
                }
            }
        }
    }
    jac
}

/// Newton-Raphson in polar coordinates from a flat start. Non-convergence is
/// reported through `converged = false`; a singular Jacobian is an error.
pub fn solve_powerflow(
    net: &NetworkModel,
    injections: &PowerInjections,
    tolerance: f64,
    max_iter: usize,
) -> Result<TrueState> {
    let n = net.bus_count();
    if injections.p.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: injections.p.len(),
        });
    }
    let y = build_bus_admittance(net);
    let slack = net.slack_position();
    let pvpq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let pq: Vec<usize> = (0..n)
        .filter(|&i| i != slack && injections.kinds[i] == BusKind::Pq)
        .collect();

    let mut col_angle = vec![None; n];
    for (k, &i) in pvpq.iter().enumerate() {
        col_angle[i] = Some(k);
    }
    let mut col_mag = vec![None; n];
    for (k, &i) in pq.iter().enumerate() {
        col_mag[i] = Some(pvpq.len() + k);
    }

    let mut vm: Vec<f64> = (0..n)
        .map(|i| match injections.kinds[i] {
            BusKind::Pq if i != slack => 1.0,
            _ => injections.v_set[i],
        })
        .collect();
    let mut va = vec![0.0; n];
    let polar = |vm: &[f64], va: &[f64]| -> Vec<Complex64> {
        vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect()
    };
    let mut v = polar(&vm, &va);

    let mut f = mismatch(&y, &v, injections, &pvpq, &pq);
    let mut iterations = 0;
    while norm_inf(&f) > tolerance && iterations < max_iter {
        iterations += 1;
        let jac = jacobian(&y, &v, &pvpq, &pq, &col_angle, &col_mag).to_csc();
        let lu = SparseLu::factor(&jac).map_err(|_| Error::SingularJacobian { iteration: iterations })?;
        let neg_f: Vec<f64> = f.iter().map(|x| -x).collect();
        let dx = lu.solve(&neg_f);
        if dx.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularJacobian { iteration: iterations });
        }
        for (k, &i) in pvpq.iter().enumerate() {
            va[i] += dx[k];
        }
        for (k, &i) in pq.iter().enumerate() {
            vm[i] += dx[pvpq.len() + k];
        }
        v = polar(&vm, &va);
        f = mismatch(&y, &v, injections, &pvpq, &pq);
    }
    let max_mismatch = norm_inf(&f);
    Ok(TrueState {
        bus_ids: net.buses().iter().map(|b| b.id).collect(),
        v,
        converged: max_mismatch <= tolerance,
        iterations,
        max_mismatch,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::{bus, line};
    use approx::assert_relative_eq;

    fn two_bus(load_p: f64) -> NetworkModel {
        let mut b2 = bus(2, BusKind::Pq);
        b2.load_p = load_p;
        NetworkModel::new(
            "t",
            100.0,
            vec![bus(1, BusKind::Slack), b2],
            vec![line(1, 2, 0.0, 0.1, 0.0)],
            vec![],
        )
        .unwrap()
    }

    /// Lossless two-bus line with V₁ = 1∠0 and a pure active load P at
    /// bus 2: Q balance gives |V₂| = cos θ₂ and P balance gives
    /// |V₂|·sin θ₂ = −P·x. Bisection on θ₂ ∈ [−π/4, 0].
    fn bisection_oracle(p: f64, x: f64) -> (f64, f64) {
        let g = |th: f64| th.cos() * th.sin() + p * x;
        let (mut lo, mut hi) = (-std::f64::consts::FRAC_PI_4, 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let th = 0.5 * (lo + hi);
        (th, th.cos())
    }

    #[test]
    fn zero_injection_is_flat() {
        let net = two_bus(0.0);
        let st = solve_powerflow(&net, &PowerInjections::from_case(&net), 1e-10, 10).unwrap();
        assert!(st.converged);
        assert_eq!(st.iterations, 0);
        assert_eq!(st.v[1], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn two_bus_matches_bisection() {
        let (th, vm) = bisection_oracle(0.5, 0.1);
        // frozen oracle output
        assert_relative_eq!(th, -0.050_083_710_580_780, epsilon = 1e-12);
        assert_relative_eq!(vm, 0.998_746_073_110_333, epsilon = 1e-12);

        let net = two_bus(0.5);
        let st = solve_powerflow(&net, &PowerInjections::from_case(&net), 1e-12, 20).unwrap();
        assert!(st.converged);
        assert_eq!(st.v[0].arg(), 0.0);
        assert_relative_eq!(st.v[1].arg(), -0.050_083_710_580_780, epsilon = 1e-10);
        assert_relative_eq!(st.v[1].norm(), 0.998_746_073_110_333, epsilon = 1e-10);
    }

    #[test]
    fn reports_non_convergence() {
        // Far beyond the maximum transferable power of the line.
        let net = two_bus(20.0);
        let st = solve_powerflow(&net, &PowerInjections::from_case(&net), 1e-8, 8);
        match st {
            Ok(st) => assert!(!st.converged),
            Err(e) => assert!(matches!(e, Error::SingularJacobian { .. })),
        }
    }
}
