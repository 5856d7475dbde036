//! Monte Carlo campaign on a bundled case.
//!
//! cargo run --release --example campaign -- ieee118 10 58 50 [seed]

use ecfse::evaluation::{run_campaign, CampaignConfig};
use ecfse::measurement::DeviceCounts;
use ecfse::network::{builtin_case, parse_case};
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 4 {
        eprintln!("usage: campaign <ieee14|ieee118> <pmu> <rtu-inj> <rtu-flow> [seed]");
        std::process::exit(1);
    }
    let text = builtin_case(&args[0]).ok_or("unknown bundled case")?;
    let net = parse_case(text)?;
    let counts = DeviceCounts::new(args[1].parse()?, args[2].parse()?, args[3].parse()?);
    let mut cfg = CampaignConfig::new(counts);
    cfg.base_seed = args.get(4).map_or(Ok(0), |s| s.parse())?;

    let start = Instant::now();
    let report = run_campaign(&net, &cfg)?;
    println!("allocation {:?}", report.allocation);
    println!(
        "mean sigma2_x {:.4e}  mean sigma_max {:.4e}  ({:.3} s)",
        report.mean_sigma2_x,
        report.mean_sigma_max,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
