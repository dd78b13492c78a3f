use std::fs::File;
use std::io::{self, Write};

use clap::{Parser, Subcommand};

use crate::config::Flags;
use crate::{bench, exit, model, simulate, verify, write_csv, CliError};

#[derive(Debug, Parser)]
#[command(name = "etap-lab", version, about = "Attention pipeline laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check ETAP, standard and reference attention against each other
    Verify(Flags),
    /// Time the pipelines and report error against the reference
    Bench(Flags),
    /// Tile-padding utilization and predicted speedup
    Model(Flags),
    /// Producer/consumer schedule trace
    Simulate(Flags),
}

/// Stdout unless `--out` names a file.
fn sink(flags: &Flags) -> Result<Box<dyn Write>, CliError> {
    Ok(match &flags.out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    })
}

pub fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Verify(flags) => {
            let flags = flags.resolve()?;
            let plan = verify::VerifyPlan::from_flags(&flags)?;
            let report = verify::run_verify(&plan)?;
            sink(&flags)?.write_all(report.render().as_bytes())?;
            if report.passed() {
                return Ok(exit::SUCCESS);
            }
            for f in report.failures() {
                let c = &f.case;
                eprintln!(
                    "FAILED {}: seed={} n_q={} n_kv={} d_qk={} d_v={} b_r={} b_c={} stages={} precision={} scale={} value={:e} tolerance={:e}",
                    f.check,
                    c.seed,
                    c.dims.n_q,
                    c.dims.n_kv,
                    c.dims.d_qk,
                    c.dims.d_v,
                    c.b_r,
                    c.b_c,
                    plan.stages,
                    c.precision,
                    plan.scale.map_or_else(|| "auto".to_string(), |s| s.to_string()),
                    f.value,
                    plan.tolerance
                );
            }
            Ok(exit::VERIFICATION_FAILED)
        }
        Command::Bench(flags) => {
            let flags = flags.resolve()?;
            let plan = bench::BenchPlan::from_flags(&flags)?;
            let rows = bench::run_bench(&plan, |msg| eprintln!("note: {msg}"))?;
            write_csv(sink(&flags)?, &rows)?;
            Ok(exit::SUCCESS)
        }
        Command::Model(flags) => {
            let flags = flags.resolve()?;
            let spec = model::spec_from_flags(&flags)?;
            let shapes = model::shapes_from_flags(&flags)?;
            write_csv(sink(&flags)?, &model::model_rows(&shapes, &spec))?;
            Ok(exit::SUCCESS)
        }
        Command::Simulate(flags) => {
            let flags = flags.resolve()?;
            let cfg = simulate::config_from_flags(&flags)?;
            let trace = simulate::run(&cfg)?;
            write_csv(sink(&flags)?, &simulate::trace_rows(&trace))?;
            let line = simulate::summary(&cfg, &trace);
            if flags.out.is_some() {
                println!("{line}");
            } else {
                eprintln!("{line}");
            }
            Ok(exit::SUCCESS)
        }
    }
}
