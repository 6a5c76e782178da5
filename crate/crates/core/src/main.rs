use std::process::ExitCode;

fn main() -> ExitCode {
    fedsched::cli::main_with_args(std::env::args_os())
}
