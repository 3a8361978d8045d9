use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(slab_cli::run(std::env::args_os()))
}
