//! Generates a noise-free synthetic benchmark, runs the full pipeline with the
//! oracle propagator and similarity grounding, and scores the result.
//!
//! cargo run --release --example synthetic_benchmark -- [scenes] [seed]

use std::time::Instant;

use tlg::metrics::Tolerance;
use tlg::pipeline::{run_evaluate, run_pipeline, PipelineConfig};
use tlg::synth::{write_benchmark, SynthConfig};

fn main() -> tlg::Result<()> {
    let mut args = std::env::args().skip(1);
    let count = args.next().and_then(|a| a.parse().ok()).unwrap_or(50);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(7);

    let dir = tempfile::tempdir().expect("temp dir");
    let (data, run) = (dir.path().join("data"), dir.path().join("run"));
    let start = Instant::now();
    let scenes = write_benchmark(&SynthConfig::default(), count, seed, &data)?;
    println!(
        "scene0000: \"{}\" ({} objects)",
        scenes[0].expression.text,
        scenes[0].objects.len()
    );
    let generated = start.elapsed();

    let config = PipelineConfig {
        workers: Some(1),
        ..PipelineConfig::default()
    };
    run_pipeline(&config, &data, &run)?;
    let report = run_evaluate(&run.join("pred"), &data.join("gt"), Tolerance::Auto)?;
    println!(
        "{count} scenes: J&F {:.4} (J {:.4}, F {:.4}); generation {:.2?}, total {:.2?}",
        report.mean_jf,
        report.mean_j,
        report.mean_f,
        generated,
        start.elapsed()
    );
    Ok(())
}
