use clap::Parser;
use duct_control::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{} (see --help)", msg.lines().next().unwrap_or("invalid arguments"));
            std::process::exit(2);
        }
    };
    std::process::exit(run(&cli).code());
}
