//! Command-line driver: loads a config, runs the pipeline, writes artifacts.
//!
//! Exit codes: 0 on success, 1 when the certificate has failing checks,
//! 2 on configuration errors.

use anyhow::Context;
use clap::Parser;
use renorm::config::RunConfig;
use renorm::pipeline::{self, Effort};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "renorm",
    about = "Builds slice atlases and certified polyhedral/smooth/rotund norms"
)]
struct Args {
    /// Config file (JSON); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the stage list, comma separated
    /// (atlas,polyhedral,smooth,lur,verify).
    #[arg(long)]
    stages: Option<String>,

    /// Output directory for atlas.json, certificate.json, ball_sections.csv.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Multiplies all check tolerances; scaled runs are marked
    /// non-authoritative in the certificate.
    #[arg(long)]
    tolerance_scale: Option<f64>,

    /// Run the checking stages at the full sample counts instead of the
    /// lighter exploratory ones.
    #[arg(long)]
    full: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load_config(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let effort = if args.full { Effort::full() } else { Effort::light() };
    let out = match pipeline::run(&cfg, &effort) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("pipeline error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let dir = args.out.unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    match pipeline::write_artifacts(&out, &dir) {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("artifact error: {e:#}");
            return ExitCode::from(2);
        }
    }
    let cert = &out.certificate;
    let mut checks = 0usize;
    let mut failures = 0usize;
    for (section, entries) in &cert.sections {
        for e in entries {
            checks += 1;
            if !e.status {
                failures += 1;
                eprintln!("[FAIL] {section}/{} {}", e.id, e.note);
            }
        }
    }
    eprintln!(
        "{} checks, {} failing; certificate {} (hash {})",
        checks,
        failures,
        if cert.passed { "PASSED" } else { "FAILED" },
        &cert.content_hash[..16.min(cert.content_hash.len())]
    );
    if cert.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn load_config(args: &Args) -> anyhow::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(stages) = &args.stages {
        let parsed: Result<Vec<_>, _> = stages
            .split(',')
            .map(|s| serde_json::from_value(serde_json::Value::String(s.trim().to_string())))
            .collect();
        cfg.stages = parsed.context("parsing --stages")?;
    }
    if let Some(scale) = args.tolerance_scale {
        cfg.tolerance_scale = scale;
    }
    cfg.validate()?;
    Ok(cfg)
}
