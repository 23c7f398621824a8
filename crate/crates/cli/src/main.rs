use std::process::ExitCode;

fn main() -> ExitCode {
    match cutoff_lab_cli::parse_args(std::env::args_os().skip(1)) {
        Ok(config) => ExitCode::from(cutoff_lab_cli::run(config) as u8),
        Err(e) if e.help => {
            print!("{e}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(cutoff_lab_cli::EXIT_INPUT as u8)
        }
    }
}
