use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nct::{build_model, parse_model, render, run_command, Command, Format, Options};
use nctopo::completion::PointKind;

#[derive(Parser, Debug)]
#[command(name = "nct", version, about = "Check and explore finite noncommutative topologies")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    model: PathBuf,
    /// Restrict to one instant of a system.
    #[arg(long)]
    at: Option<String>,
    /// minimal, irreducible or strong
    #[arg(long)]
    point_kind: Option<PointKind>,
    /// Exit 1 when a checked property fails.
    #[arg(long)]
    strict: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Enumeration cap for sublattice searches.
    #[arg(long)]
    cap: Option<usize>,
    /// Block to act on; `check` and `export` default to every block, other commands to the first of the right kind.
    #[arg(long)]
    block: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.model) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.model.display());
            return ExitCode::from(2);
        }
    };
    let doc = match parse_model(&text) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let model = match build_model(&doc) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let opts = Options {
        at: cli.at,
        point_kind: cli.point_kind,
        strict: cli.strict,
        format: cli.format,
        cap: cli.cap,
        block: cli.block,
    };
    let outcome = match run_command(&doc, &model, cli.command, &opts) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match render(cli.command, &outcome, opts.format) {
        Ok(s) => print!("{s}"),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    ExitCode::from(outcome.exit_code(opts.strict) as u8)
}
