//! Command-line front end shared by the `sds` binary and tests.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::asf::AsfMode;
use crate::error::{Result, SdsError};
use crate::imaging::{self, ImageBuffer};
use crate::pipeline::{self, artifacts, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "sds", version, about = "Select synthetic image/annotation pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score images with the perturbation gate and write pcs_scores.jsonl.
    PcsScore(RunArgs),
    /// Score annotations of gated samples (needs pcs_scores.jsonl).
    AsfScore(RunArgs),
    /// Run the whole pipeline and write the curated manifest.
    Select(RunArgs),
    /// Re-run selection and reporting from existing score files.
    Report(RunArgs),
    /// Write one patch-mixed variant of an image.
    MixPreview(MixArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    tau_s: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau_pcs: Option<f64>,
    #[arg(long)]
    keep_fraction: Option<f64>,
    /// direct, rule_a, rule_b or both.
    #[arg(long)]
    mode: Option<AsfMode>,
}

#[derive(Args, Debug)]
struct MixArgs {
    #[arg(long)]
    image: PathBuf,
    /// Number of patches.
    #[arg(long)]
    scale: usize,
    #[arg(long, default_value_t = 0)]
    order: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample id used for the permutation; defaults to the file stem.
    #[arg(long)]
    id: Option<String>,
    /// Output PNG; defaults to `{stem}_mix_s{scale}_o{order}.png` next to the input.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> std::result::Result<RunConfig, (i32, String)> {
        if !self.config.is_file() {
            return Err((2, format!("config file {} not found", self.config.display())));
        }
        let mut cfg = RunConfig::load(&self.config).map_err(|e| (1, e.to_string()))?;
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.tau_s {
            cfg.pcs.tau_s = t;
        }
        if let Some(t) = self.tau_pcs {
            cfg.pcs.tau_pcs = t;
        }
        if let Some(k) = self.keep_fraction {
            cfg.asf.keep_fraction = k;
        }
        if let Some(m) = self.mode {
            cfg.asf.mode = m;
        }
        cfg.sync_seed();
        Ok(cfg)
    }
}

/// Parse `argv` (program name first) and run. Returns the process exit code:
/// 0 on success, 2 on usage errors or a missing config file, 1 otherwise.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::MixPreview(args) => mix_preview(args).map_err(|e| (1, e.to_string())),
        Command::PcsScore(a) | Command::AsfScore(a) | Command::Select(a) | Command::Report(a) => a
            .load()
            .and_then(|cfg| dispatch(&cli.command, &cfg).map_err(|e| (1, e.to_string()))),
    };
    match result {
        Ok(()) => 0,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::PcsScore(_) => {
            let inputs = pipeline::Inputs::load(cfg)?;
            let run = pipeline::pcs_stage(cfg, &inputs)?;
            println!(
                "pcs: {} accepted, {} rejected, {} errored -> {}",
                run.accepted(),
                run.rejected(),
                run.errors.len(),
                cfg.output.join(artifacts::PCS_SCORES).display()
            );
        }
        Command::AsfScore(_) => {
            let run = pipeline::asf_from_files(cfg)?;
            println!(
                "asf: {} scored, {} errored -> {}",
                run.scored.len(),
                run.errors.len(),
                cfg.output.join(artifacts::ASF_SCORES).display()
            );
        }
        Command::Select(_) => {
            let (report, _) = pipeline::run_select(cfg)?;
            print!("{}", report.to_text());
        }
        Command::Report(_) => {
            let (report, _) = pipeline::report_from_files(cfg)?;
            print!("{}", report.to_text());
        }
        Command::MixPreview(_) => unreachable!("handled before config loading"),
    }
    Ok(())
}

fn mix_preview(args: &MixArgs) -> Result<()> {
    let stem = args
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| SdsError::Config(format!("{} has no file name", args.image.display())))?;
    let id = args.id.clone().unwrap_or_else(|| stem.clone());
    let img = ImageBuffer::load(&args.image)?;
    let grid = imaging::make_grid(&img, args.scale)?;
    let perm = imaging::derive_permutation(args.seed, &id, args.scale, args.order);
    let mixed = imaging::mix(&img, &grid, &perm)?;
    let out = args.out.clone().unwrap_or_else(|| {
        args.image
            .with_file_name(format!("{stem}_mix_s{}_o{}.png", args.scale, args.order))
    });
    mixed.save_png(&out)?;
    println!(
        "{} ({}x{} grid, order {:?}) -> {}",
        args.image.display(),
        grid.rows,
        grid.cols,
        perm.order,
        out.display()
    );
    Ok(())
}
