use clap::Parser;
use vtt_cli::commands::{execute, Cli};

fn main() {
    if let Err(e) = execute(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
