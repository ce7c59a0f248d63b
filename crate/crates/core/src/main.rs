use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use plflow::cli::{self, Cli};

fn main() -> ExitCode {
    let threads = std::env::var("PLFLOW_THREADS").ok();
    match cli::threads_from_env(threads.as_deref()) {
        Ok(Some(n)) => {
            plflow::par::init_threads(n);
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(cli::EXIT_USAGE as u8);
        }
    }
    let args = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let code = match cli::run(args, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    let _ = out.flush();
    ExitCode::from(code as u8)
}
