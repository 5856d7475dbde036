//! Random networks of up to four buses.

use ecfse::estimator::{EstimationRun, EstimatorConfig};
use ecfse::evaluation::Scenario;
use ecfse::measurement::{DeviceCounts, NoiseMode, PmuMode, StdDevConfig};
use ecfse::network::{parse_case, NetworkModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use std::fmt::Write as _;

#[derive(Debug, Clone)]
pub struct SmallCase {
    loads: Vec<(f64, f64)>,
    /// Parent of bus i+2 in a spanning tree, plus optional extra lines.
    parents: Vec<usize>,
    extra: Vec<(usize, usize)>,
    impedances: Vec<(f64, f64, f64)>,
}

impl SmallCase {
    pub fn text(&self) -> String {
        let n = self.loads.len() + 1;
        let mut out = String::from("function mpc = small\nmpc.baseMVA = 100;\nmpc.bus = [\n");
        let _ = writeln!(out, "1 3 0 0 0 0 1 1 0 138 1 1.1 0.9;");
        for (i, (p, q)) in self.loads.iter().enumerate() {
            let _ = writeln!(out, "{} 1 {} {} 0 0 1 1 0 138 1 1.1 0.9;", i + 2, p * 100.0, q * 100.0);
        }
        out.push_str("];\nmpc.gen = [\n1 0 0 0 0 1 100 1 0 0;\n];\nmpc.branch = [\n");
        let mut lines: Vec<(usize, usize)> = self.parents.iter().enumerate().map(|(i, &p)| (p, i + 2)).collect();
        for &(a, b) in &self.extra {
            if a != b && a <= n && b <= n && !lines.contains(&(a, b)) && !lines.contains(&(b, a)) {
                lines.push((a, b));
            }
        }
        for (k, (a, b)) in lines.iter().enumerate() {
            let (r, x, bc) = self.impedances[k % self.impedances.len()];
            let _ = writeln!(out, "{a} {b} {r} {x} {bc} 0 0 0 0 0 1 -360 360;");
        }
        out.push_str("];\n");
        out
    }
}

pub fn small_case() -> impl Strategy<Value = SmallCase> {
    (1usize..=3).prop_flat_map(|m| {
        (
            prop::collection::vec((0.05f64..0.6, -0.1f64..0.3), m),
            (0..m).map(|i| 1usize..=i + 1).collect::<Vec<_>>(),
            prop::collection::vec((1usize..=4, 1usize..=4), 0..3),
            prop::collection::vec((0.005f64..0.05, 0.05f64..0.3, 0.0f64..0.05), 6),
        )
            .prop_map(|(loads, parents, extra, impedances)| SmallCase {
                loads,
                parents,
                extra,
                impedances,
            })
    })
}

pub fn dense_solve(run: &EstimationRun) -> Vec<f64> {
    let d = run.kkt.matrix.to_dense();
    let n = d.len();
    let k = DMatrix::from_fn(n, n, |i, j| d[i][j]);
    k.lu()
        .solve(&DVector::from_column_slice(&run.kkt.rhs))
        .expect("dense KKT is singular")
        .as_slice()
        .to_vec()
}

pub fn setup(
    case: &SmallCase,
    pmu: usize,
    flow: usize,
    mode: PmuMode,
    seed: u64,
) -> Option<(NetworkModel, EstimationRun)> {
    let net = parse_case(&case.text()).unwrap();
    let n = net.bus_count();
    let pmu = pmu.min(n);
    let flow = flow.min(n - pmu);
    let counts = DeviceCounts::new(pmu, n - pmu - flow, flow);
    // Sites without a usable power factor reject some allocations.
    let sc = Scenario::prepare(&net, counts, mode, seed).ok()?;
    let meas = sc
        .synthesize(&net, &StdDevConfig::default(), NoiseMode::Uniform, seed)
        .unwrap();
    let run = EstimationRun::new(&net, &meas, &EstimatorConfig::default()).unwrap();
    Some((net, run))
}

/// Largest difference between the sparse and a dense LU solution of the
/// same KKT system over `cases` random instances.
pub fn max_sparse_dense_gap(cases: u32) -> Result<f64, String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let worst = std::cell::Cell::new(0.0f64);
    let strategy = (small_case(), 1usize..=2, 0usize..=3, any::<bool>(), 0u64..1000);
    runner
        .run(&strategy, |(case, pmu, flow, injection, seed)| {
            let mode = if injection {
                PmuMode::Injection
            } else {
                PmuMode::LineFlow
            };
            let Some((_, run)) = setup(&case, pmu, flow, mode, seed) else {
                return Ok(());
            };
            let z = dense_solve(&run);
            let full = run.solution.x.iter().chain(&run.solution.lambda);
            let gap = z.iter().zip(full).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            worst.set(worst.get().max(gap));
            if gap > 1e-10 {
                return Err(TestCaseError::fail(format!("gap {gap:e}")));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(worst.get())
}
