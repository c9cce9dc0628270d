use std::process::ExitCode;

fn main() -> ExitCode {
    nbiot_core::cli::main_with(std::env::args_os())
}
