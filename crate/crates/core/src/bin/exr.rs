use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use exrunner::cli::{dispatch, install_signal_handler, Cli};
use exrunner::orchestrator::Control;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let control = match &cli.command {
        exrunner::cli::Command::Run(args) => {
            let dir = exrunner::cli::load_validated(&args.config)
                .map(|d| d.output_dir)
                .ok();
            Arc::new(match dir {
                Some(dir) => Control::with_control_file(&dir),
                None => Control::new(),
            })
        }
        _ => Arc::new(Control::new()),
    };
    if let Err(e) = install_signal_handler(control.clone()) {
        log::warn!("cannot install the interrupt handler: {e}");
    }
    match dispatch(cli, control) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
