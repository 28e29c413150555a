use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use tdvmm_cli::error::CliError;
use tdvmm_cli::{execute, Cli};

fn write(text: &str, out: Option<&std::path::Path>) -> Result<(), CliError> {
    let result = match out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    result.map_err(CliError::schema)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = execute(&cli.command).and_then(|(text, out)| write(&text, out.as_deref()));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
