use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::Parser;
use plansynth_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cancel = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&cancel);
    if let Err(e) = ctrlc::set_handler(move || {
        if flag.swap(true, Ordering::SeqCst) {
            std::process::exit(plansynth_cli::EXIT_INTERRUPTED);
        }
        eprintln!("interrupt: finishing episodes in flight (press again to abort)");
    }) {
        eprintln!("warning: cannot install interrupt handler: {e}");
    }
    match run(&cli, &cancel) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
