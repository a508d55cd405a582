use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(cohort_explain::cli::run(std::env::args_os()) as u8)
}
