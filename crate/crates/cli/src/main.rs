use std::io::Write;
use std::panic;
use std::process::ExitCode;

use clap::Parser;
use drivid_cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = panic::catch_unwind(|| {
        let mut stdout = std::io::stdout();
        let r = run(&cli, &mut stdout);
        let _ = stdout.flush();
        r
    });
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()) as u8)
        }
        // the panic message is already on stderr
        Err(_) => ExitCode::from(4),
    }
}
