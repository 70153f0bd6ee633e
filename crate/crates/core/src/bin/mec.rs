use std::process::ExitCode;

use mec_core::cli;

fn main() -> ExitCode {
    cli::init_logging();
    let code = std::panic::catch_unwind(|| cli::run(std::env::args_os(), &mut std::io::stdout().lock()))
        .unwrap_or(cli::EXIT_INTERNAL);
    ExitCode::from(code as u8)
}
