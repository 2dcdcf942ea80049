use std::io::Write;
use std::process::ExitCode;

use expdesign_cli::error::CliError;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    match expdesign_cli::parse_invocation(&args).and_then(|inv| {
        let report = expdesign_cli::execute(&inv)?;
        let text = report.to_json()?;
        match &inv.out {
            Some(path) => std::fs::write(path, &text).map_err(|source| CliError::Io { path: path.clone(), source })?,
            None => {
                let _ = std::io::stdout().write_all(text.as_bytes());
            }
        }
        Ok(())
    }) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            ExitCode::SUCCESS
        }
        Err(e) => {
            let body = serde_json::json!({ "error": e.report() });
            eprintln!("{body}");
            ExitCode::from(2)
        }
    }
}
