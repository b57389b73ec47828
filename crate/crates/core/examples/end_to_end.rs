//! Full selection run on a generated 200-sample dataset: image gate,
//! annotation filter, curated manifest and report.
//!
//!     cargo run --release --example end_to_end [workers]

use sds_core::asf::AsfConfig;
use sds_core::pcs::PcsConfig;
use sds_core::pipeline;
use sds_core::synth::{self, Fixture};

fn main() -> sds_core::Result<()> {
    let workers = std::env::args().nth(1).map_or(4, |w| w.parse().expect("workers"));
    let dir = std::env::temp_dir().join("sds-examples/end_to_end");
    let _ = std::fs::remove_dir_all(&dir);

    let pcs = PcsConfig::default();
    let plans = synth::random_plans(200, 6, 0.65, 5);
    let fx = Fixture::write(&dir, &plans, 6, &pcs)?;
    let cfg = fx.run_config(&dir.join("out"), pcs, AsfConfig::default(), workers);
    std::fs::write(dir.join("run.toml"), cfg.to_toml()).map_err(|e| sds_core::SdsError::Io {
        path: dir.join("run.toml"),
        source: e,
    })?;

    let (report, curated) = pipeline::run_select(&cfg)?;
    print!("{}", report.to_text());
    println!("\n{} curated records in {}", curated.len(), cfg.output.display());
    println!("same run from the CLI: sds select --config {}", dir.join("run.toml").display());
    Ok(())
}
