use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(lifestyle::cli::main())
}
