use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MEDIARANK_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let mut stdout = std::io::stdout().lock();
    let code = mediarank::cli::run(std::env::args_os(), &mut stdout);
    ExitCode::from(code as u8)
}
