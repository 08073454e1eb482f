//! Builds a hard, noisy synthetic suite and prints the four-variant ablation table.
//!
//! cargo run --release --example ablation -- [scenes] [seed]

use tlg::pipeline::{run_ablation, PipelineConfig};
use tlg::synth::{write_benchmark, SynthConfig};

fn main() -> tlg::Result<()> {
    let mut args = std::env::args().skip(1);
    let count = args.next().and_then(|a| a.parse().ok()).unwrap_or(50);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(2024);

    let dir = tempfile::tempdir().expect("temp dir");
    write_benchmark(&SynthConfig::hard_noisy(), count, seed, dir.path())?;
    let report = run_ablation(&PipelineConfig::default(), dir.path())?;
    print!("{}", report.to_table());

    let clean = tempfile::tempdir().expect("temp dir");
    write_benchmark(&SynthConfig::default(), count, seed, clean.path())?;
    let report = run_ablation(&PipelineConfig::default(), clean.path())?;
    println!("\nnoise-free, easy scenes:");
    print!("{}", report.to_table());
    Ok(())
}
