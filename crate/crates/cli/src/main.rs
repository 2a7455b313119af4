use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hqnet::experiments::{run_config, Overrides, Row, CSV_COLUMNS};

/// Run one experiment scenario and write its rows as CSV.
#[derive(Parser, Debug)]
#[command(name = "hqnet", version)]
struct Args {
    /// Scenario name, e.g. routing-diversified.
    #[arg(long)]
    scenario: String,
    /// TOML configuration; missing keys take the scenario defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u32>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write<W: io::Write>(w: W, rows: &[Row]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_COLUMNS)?;
    for r in rows {
        out.write_record(r.record())?;
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match &args.config {
        Some(p) => match fs::read_to_string(p) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("hqnet: cannot read {}: {e}", p.display());
                return ExitCode::from(2);
            }
        },
        None => String::new(),
    };
    let over = Overrides {
        seed: args.seed,
        trials: args.trials,
    };
    let rows = match run_config(&args.scenario, &text, &over) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("hqnet: {e}");
            return ExitCode::from(2);
        }
    };
    let written = match &args.out {
        Some(p) => fs::File::create(p).map_err(csv::Error::from).and_then(|f| write(f, &rows)),
        None => write(io::stdout().lock(), &rows),
    };
    if let Err(e) = written {
        eprintln!("hqnet: writing output: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
