use std::io;
use std::process::ExitCode;

use clap::Parser;
use loft_cli::{run, Cli, CliError, Console};

/// Caps the matrix-product thread pool before it is first used.
fn configure_threads() {
    let threads = std::env::var("LOFT_THREADS")
        .ok()
        .filter(|v| !v.is_empty())
        .unwrap_or_else(|| "1".to_owned());
    std::env::set_var("MATMUL_NUM_THREADS", threads);
}

fn main() -> ExitCode {
    configure_threads();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let (mut out, mut err) = (io::stdout().lock(), io::stderr());
    let mut console = Console::new(&mut out, &mut err);
    match run(&cli, &mut console) {
        Ok(()) => ExitCode::SUCCESS,
        // Output piped into something like `head` that stopped reading.
        Err(CliError::Io { source, .. }) if source.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
