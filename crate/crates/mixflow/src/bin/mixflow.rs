use std::process::ExitCode;

fn main() -> ExitCode {
    match mixflow::run(std::env::args_os()) {
        Ok(()) | Err(mixflow::CliError::Help) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mixflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
