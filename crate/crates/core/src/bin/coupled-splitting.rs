use std::process::ExitCode;

fn main() -> ExitCode {
    coupled_splitting::cli::run(std::env::args_os())
}
