use clap::Parser;
use forecast_cli::error::CliError;
use forecast_cli::Cli;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let err = CliError::config(first.trim_start_matches("error: "));
            eprintln!("{}", err.to_json_line());
            std::process::exit(err.exit_code());
        }
    };
    match forecast_cli::run(&cli) {
        Ok(dir) => println!("{}", dir.display()),
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            std::process::exit(e.exit_code());
        }
    }
}
