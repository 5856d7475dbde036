#![allow(dead_code)]

pub mod small;

use ecfse::network::{parse_case, NetworkModel};
use num_complex::Complex64;
use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn load_case(name: &str) -> NetworkModel {
    let text = std::fs::read_to_string(fixture(name)).unwrap();
    parse_case(&text).unwrap()
}

/// Reference voltages from a `bus,vm,va_deg` file, rotated so that the
/// slack angle is zero.
pub fn reference_voltages(name: &str, net: &NetworkModel) -> Vec<Complex64> {
    let text = std::fs::read_to_string(fixture(name)).unwrap();
    let mut v = vec![Complex64::new(f64::NAN, 0.0); net.bus_count()];
    for row in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        let id: u32 = cols[0].parse().unwrap();
        let vm: f64 = cols[1].parse().unwrap();
        let va: f64 = cols[2].parse::<f64>().unwrap().to_radians();
        v[net.position(id).unwrap()] = Complex64::from_polar(vm, va);
    }
    let rot = Complex64::from_polar(1.0, -v[net.slack_position()].arg());
    v.into_iter().map(|x| x * rot).collect()
}

use ecfse::estimator::{estimate, EstimatorConfig};
use ecfse::evaluation::{emit_comparison, estimate_beats_rtu_readings, Scenario};
use ecfse::measurement::{DeviceCounts, NoiseMode, PmuMode, StdDevConfig};

pub fn ieee14_counts() -> DeviceCounts {
    DeviceCounts::new(3, 6, 5)
}

pub fn ieee118_counts() -> DeviceCounts {
    DeviceCounts::new(10, 58, 50)
}

/// Number of seeds, out of `seeds`, where the estimate beats the RTU
/// voltage readings at a strict majority of RTU sites. Each seed draws its
/// own allocation and noise.
pub fn comparison_wins(net: &NetworkModel, counts: DeviceCounts, seeds: std::ops::Range<u64>) -> usize {
    seeds
        .filter(|&seed| {
            let sc = Scenario::prepare(net, counts, PmuMode::LineFlow, seed).unwrap();
            let meas = sc
                .synthesize(net, &StdDevConfig::default(), NoiseMode::Uniform, seed)
                .unwrap();
            let res = estimate(net, &meas, &EstimatorConfig::default()).unwrap();
            let rows = emit_comparison(net, &sc.truth, &meas, &res).unwrap();
            estimate_beats_rtu_readings(&rows)
        })
        .count()
}
