use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(qlw_cli::run())
}
