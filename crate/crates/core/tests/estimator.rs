mod common;

use common::load_case;
use ecfse::estimator::{estimate, EstimationRun, EstimatorConfig, Var};
use ecfse::evaluation::Scenario;
use ecfse::measurement::{DeviceCounts, MeasurementSet, NoiseMode, PmuMode, StdDevConfig};
use ecfse::network::{parse_case, NetworkModel};
use ecfse::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TWO_BUS: &str = "\
function mpc = two_bus
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0 0 0 0 1 1 0 138 1 1.1 0.9;
    2 1 50 10 0 0 1 1 0 138 1 1.1 0.9;
];
mpc.gen = [
    1 50 10 0 0 1 100 1 0 0;
];
mpc.branch = [
    1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;
];
";

const THREE_BUS: &str = "\
function mpc = three_bus
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0 0 0 0 1 1 0 138 1 1.1 0.9;
    2 1 40 15 0 0 1 1 0 138 1 1.1 0.9;
    3 1 30 5 0 0 1 1 0 138 1 1.1 0.9;
];
mpc.gen = [
    1 70 20 0 0 1 100 1 0 0;
];
mpc.branch = [
    1 2 0.01 0.08 0.02 0 0 0 0 0 1 -360 360;
    1 3 0.02 0.12 0.02 0 0 0 0 0 1 -360 360;
    2 3 0.015 0.1 0.01 0 0 0 0 0 1 -360 360;
];
";

fn measurements(
    net: &NetworkModel,
    counts: DeviceCounts,
    mode: PmuMode,
    noise: NoiseMode,
    seed: u64,
) -> (Scenario, MeasurementSet) {
    let sc = Scenario::prepare(net, counts, mode, seed).unwrap();
    let meas = sc.synthesize(net, &StdDevConfig::default(), noise, seed).unwrap();
    (sc, meas)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn two_bus_dimensions_injection_mode() {
    let net = parse_case(TWO_BUS).unwrap();
    let (_, meas) = measurements(
        &net,
        DeviceCounts::new(1, 1, 0),
        PmuMode::Injection,
        NoiseMode::Uniform,
        3,
    );
    let run = EstimationRun::new(&net, &meas, &EstimatorConfig::default()).unwrap();
    assert_eq!(run.program.index.len(), 16);
    assert_eq!(run.kkt.m, 8);
    assert_eq!(run.kkt.matrix.nrows(), 24);
    assert_eq!(run.kkt.matrix.asymmetry(), 0.0);
}

#[test]
fn two_bus_matches_dense_solve() {
    let net = parse_case(TWO_BUS).unwrap();
    let (_, meas) = measurements(
        &net,
        DeviceCounts::new(1, 1, 0),
        PmuMode::Injection,
        NoiseMode::Uniform,
        3,
    );
    let run = EstimationRun::new(&net, &meas, &EstimatorConfig::default()).unwrap();
    let z = dense_solve(&run);
    assert!(max_abs_diff(&z[..run.kkt.n], &run.solution.x) <= 1e-10);
}

fn dense_solve(run: &EstimationRun) -> Vec<f64> {
    let d = run.kkt.matrix.to_dense();
    let n = d.len();
    let k = DMatrix::from_fn(n, n, |i, j| d[i][j]);
    let rhs = DVector::from_column_slice(&run.kkt.rhs);
    k.lu().solve(&rhs).expect("dense KKT is singular").as_slice().to_vec()
}

#[test]
fn perfect_measurements_zero_conductance_current() {
    for name in ["case14.m", "case118.m"] {
        let net = load_case(name);
        let counts = if net.bus_count() == 14 {
            DeviceCounts::new(3, 6, 5)
        } else {
            DeviceCounts::new(10, 58, 50)
        };
        let (sc, meas) = measurements(&net, counts, PmuMode::LineFlow, NoiseMode::None, 0);
        let run = EstimationRun::new(&net, &meas, &EstimatorConfig::default()).unwrap();
        let res = run.result(&net, &meas);
        let err = max_abs_diff(&res.rectangular(), &sc.truth.rectangular());
        assert!(err <= 1e-8, "{name}: state error {err:e}");
        assert!(
            res.max_conductance_current <= 1e-8,
            "{name}: I_G {:e}",
            res.max_conductance_current
        );
        // Every residual vanishes, so does the objective.
        assert!(res.objective <= 1e-8, "{name}: objective {:e}", res.objective);
        assert!(res.kkt_residual <= 1e-9);
    }
}

#[test]
fn zero_noise_with_injection_pmus() {
    let net = load_case("case14.m");
    let (sc, meas) = measurements(&net, DeviceCounts::new(3, 6, 5), PmuMode::Injection, NoiseMode::None, 1);
    let res = estimate(&net, &meas, &EstimatorConfig::default()).unwrap();
    assert!(max_abs_diff(&res.rectangular(), &sc.truth.rectangular()) <= 1e-8);
    assert!(res.max_conductance_current <= 1e-8);
}

#[test]
fn unmonitored_line_connects_to_source_node() {
    let net = parse_case(THREE_BUS).unwrap();
    let (sc, mut meas) = measurements(&net, DeviceCounts::new(1, 2, 0), PmuMode::LineFlow, NoiseMode::None, 0);
    let full = EstimationRun::new(&net, &meas, &EstimatorConfig::default()).unwrap();
    assert_eq!(meas.pmu[0].currents.len(), 2);
    meas.pmu[0].currents.truncate(1);
    let run = EstimationRun::new(&net, &meas, &EstimatorConfig::default()).unwrap();

    // One terminal node, one channel and one conductance fewer.
    assert_eq!(full.program.index.len() - run.program.index.len(), 6);
    assert_eq!(full.kkt.m - run.kkt.m, 4);
    let terminals = run
        .program
        .index
        .vars()
        .iter()
        .filter(|v| matches!(v, Var::TerminalV { .. }))
        .count();
    assert_eq!(terminals, 2);

    let res = run.result(&net, &meas);
    assert!(max_abs_diff(&res.rectangular(), &sc.truth.rectangular()) <= 1e-8);
    assert!(res.max_conductance_current <= 1e-8);
}

#[test]
fn noisy_trial_satisfies_kkt() {
    let net = load_case("case14.m");
    let (_, meas) = measurements(
        &net,
        DeviceCounts::new(3, 6, 5),
        PmuMode::LineFlow,
        NoiseMode::Uniform,
        11,
    );
    let res = estimate(&net, &meas, &EstimatorConfig::default()).unwrap();
    assert!(res.kkt_residual <= 1e-9, "{:e}", res.kkt_residual);
    assert!(res.solve_seconds.is_some());
    // The slack PMU anchors the angle reference.
    assert!(res.buses[0].angle.abs() < 1e-2);
}

#[test]
fn argmin_over_feasible_directions() {
    let net = load_case("case14.m");
    let (_, meas) = measurements(
        &net,
        DeviceCounts::new(3, 6, 5),
        PmuMode::LineFlow,
        NoiseMode::Uniform,
        5,
    );
    let run = EstimationRun::new(&net, &meas, &EstimatorConfig::default()).unwrap();
    let (n, m) = (run.kkt.n, run.kkt.m);
    let a = DMatrix::from_fn(m, n, |i, j| run.program.constraints.get(i, j));
    // A has full row rank, so I − VVᵀ projects onto its null space.
    let v_t = a.clone().svd(false, true).v_t.unwrap();
    let full = DMatrix::<f64>::identity(n, n) - v_t.transpose() * &v_t;
    let x = &run.solution.x;
    let f0 = run.objective.value(x);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let r = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let delta = &full * r;
        let delta = delta.scale(1e-3 / delta.amax());
        assert!((&a * &delta).amax() < 1e-12);
        let moved: Vec<f64> = x.iter().zip(delta.iter()).map(|(x, d)| x + d).collect();
        let f1 = run.objective.value(&moved);
        assert!(f1 >= f0 - 1e-12, "f rose from {f0} to {f1}");
    }
}

/// Relative error of the analytic gradient against central differences.
fn gradient_error(run: &EstimationRun, x: &[f64]) -> f64 {
    let g = run.objective.gradient(x);
    let h = 0.5;
    let mut worst: f64 = 0.0;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = run.objective.value(&probe);
        probe[i] = x[i] - h;
        let down = run.objective.value(&probe);
        probe[i] = x[i];
        worst = worst.max(((up - down) / (2.0 * h) - g[i]).abs());
    }
    let scale = g.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    worst / scale
}

#[test]
fn gradient_matches_finite_differences() {
    let net = load_case("case14.m");
    let (_, meas) = measurements(
        &net,
        DeviceCounts::new(3, 6, 5),
        PmuMode::LineFlow,
        NoiseMode::Uniform,
        2,
    );
    let run = EstimationRun::new(&net, &meas, &EstimatorConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..5 {
        let x: Vec<f64> = run.solution.x.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
        let err = gradient_error(&run, &x);
        assert!(err <= 1e-6, "relative gradient error {err:e}");
    }
}

#[test]
fn heavier_pmu_voltage_weight_tightens_its_residual() {
    let net = load_case("case14.m");
    let (_, base) = measurements(
        &net,
        DeviceCounts::new(3, 6, 5),
        PmuMode::LineFlow,
        NoiseMode::Uniform,
        4,
    );
    let cfg = EstimatorConfig::default();
    for p in 0..base.pmu.len() {
        let mut prev = f64::INFINITY;
        for factor in [1.0, 0.5, 0.1, 0.01] {
            let mut meas = base.clone();
            meas.pmu[p].v_re.sigma *= factor;
            let run = EstimationRun::new(&net, &meas, &cfg).unwrap();
            let slot = run.program.pmu_voltage_slots[p];
            let resid = (run.solution.x[slot] - meas.pmu[p].v_re.value).abs();
            assert!(resid <= prev * (1.0 + 1e-9) + 1e-15, "PMU {p}: {resid:e} > {prev:e}");
            prev = resid;
        }
    }
}

#[test]
fn stationarity_over_seeds() {
    for (name, counts) in [
        ("case14.m", DeviceCounts::new(3, 6, 5)),
        ("case118.m", DeviceCounts::new(10, 58, 50)),
    ] {
        let net = load_case(name);
        let sc = Scenario::prepare(&net, counts, PmuMode::LineFlow, 0).unwrap();
        for seed in 0..50 {
            let meas = sc
                .synthesize(&net, &StdDevConfig::default(), NoiseMode::Uniform, seed)
                .unwrap();
            let run = EstimationRun::new(&net, &meas, &EstimatorConfig::default()).unwrap();
            assert!(
                run.solution.stationarity <= 1e-8,
                "{name} seed {seed}: {:e}",
                run.solution.stationarity
            );
            assert!(
                run.solution.feasibility <= 1e-8,
                "{name} seed {seed}: {:e}",
                run.solution.feasibility
            );
        }
    }
}

#[test]
fn unit_conductance_weight_is_available() {
    let net = load_case("case14.m");
    let (sc, meas) = measurements(&net, DeviceCounts::new(3, 6, 5), PmuMode::LineFlow, NoiseMode::None, 0);
    let cfg = EstimatorConfig {
        conductance_weight: ecfse::estimator::ConductanceWeight::Unit,
        ..Default::default()
    };
    let res = estimate(&net, &meas, &cfg).unwrap();
    assert!(max_abs_diff(&res.rectangular(), &sc.truth.rectangular()) <= 1e-8);
}

#[test]
fn bad_conductance_is_rejected() {
    let net = parse_case(TWO_BUS).unwrap();
    let (_, meas) = measurements(
        &net,
        DeviceCounts::new(1, 1, 0),
        PmuMode::Injection,
        NoiseMode::Uniform,
        0,
    );
    for g in [0.0, -1.0, f64::NAN] {
        let cfg = EstimatorConfig {
            g_pmu: g,
            ..Default::default()
        };
        assert!(matches!(estimate(&net, &meas, &cfg), Err(Error::InvalidMeasurement(_))));
    }
}

#[test]
fn single_pmu_voltage_determines_the_network() {
    // Zero-injection KCL at every bus without a device closes the network
    // equations, so one PMU voltage is enough.
    let net = parse_case(THREE_BUS).unwrap();
    let (sc, mut meas) = measurements(&net, DeviceCounts::new(1, 2, 0), PmuMode::LineFlow, NoiseMode::None, 0);
    meas.allocation.rtu_injection.clear();
    meas.rtu.clear();
    meas.pmu[0].currents.clear();
    let res = estimate(&net, &meas, &EstimatorConfig::default()).unwrap();
    let err = max_abs_diff(&res.rectangular(), &sc.truth.rectangular());
    // Buses 2 and 3 carry load, so the zero-injection model is wrong there.
    assert!(err > 1e-3, "{err:e}");
    assert_eq!(res.unknowns, 10);
}
