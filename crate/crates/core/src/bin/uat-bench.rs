use std::process::ExitCode;

use uat_bench::cli::{self, CliError};

fn main() -> ExitCode {
    let code = match cli::parse_args(std::env::args_os()) {
        Ok(command) => cli::run(command),
        Err(err) => {
            match &err {
                CliError::Info(text) => print!("{text}"),
                CliError::Usage(text) => eprint!("{}", text.trim_end().to_string() + "\n"),
            }
            err.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
