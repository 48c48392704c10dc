use clap::Parser;
use log::error;
use shks_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(raw) = std::env::var("SHKS_WORKERS") {
        match raw.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    error!("cannot size worker pool: {e}");
                }
            }
            _ => {
                eprintln!("error: SHKS_WORKERS must be a positive integer, got `{raw}`");
                std::process::exit(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(manifest) => {
            for path in &manifest.outputs {
                println!("{path}");
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
