//! Score images with the perturbation gate using a table-driven mock encoder.
//!
//!     cargo run --example pcs_scoring

use sds_core::embedding::MockBackend;
use sds_core::manifest;
use sds_core::pcs::{self, PcsConfig};
use sds_core::synth::{Fixture, SamplePlan};

fn main() -> sds_core::Result<()> {
    let dir = std::env::temp_dir().join("sds-examples/pcs_scoring");
    let cfg = PcsConfig::default();
    // s_x is the caption/image similarity, s_hat what is left after mixing.
    let plans = [
        SamplePlan::new("sharp", &[1], 0.92, 0.55, 0),
        SamplePlan::new("texture_only", &[1], 0.90, 0.86, 0),
        SamplePlan::new("off_caption", &[2], 0.70, 0.35, 0),
        SamplePlan::new("borderline", &[2], 0.81, 0.70, 0),
    ];
    let fx = Fixture::write(&dir, &plans, 2, &cfg)?;
    let backend = MockBackend::load(&fx.mock)?;

    let run = pcs::score_dataset(&fx.records, &manifest::manifest_root(&fx.manifest), &backend, &cfg, 2)?;
    println!("tau_s = {}, tau_pcs = {}", cfg.tau_s, cfg.tau_pcs);
    println!("{:<14} {:>6} {:>6} {:>6}  gate", "id", "s_x", "s_hat", "pcs");
    for r in &run.results {
        println!(
            "{:<14} {:>6.3} {:>6.3} {:>6.3}  {}",
            r.sample_id,
            r.s_x,
            r.s_hat_mean,
            r.pcs,
            if r.accepted { "accept" } else { "reject" }
        );
    }

    let hist = pcs::score_histogram(&run.results, vec![-0.1, 0.0, 0.1, 0.2, 0.3, 0.4, 0.5])?;
    print!("\n{}", hist.to_csv());
    Ok(())
}
