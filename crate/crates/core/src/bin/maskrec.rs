use clap::Parser;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let level = match maskrec::cli::Cli::try_parse_from(&args).map(|c| c.verbose) {
        Ok(0) | Err(_) => "info",
        Ok(1) => "debug",
        Ok(_) => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    std::process::exit(maskrec::cli::run(args));
}
