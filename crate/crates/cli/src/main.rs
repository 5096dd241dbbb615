use clap::Parser;
use conic_cli::commands::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("CF_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
