//! Thin binary dispatcher. All logic lives in the library.

use clap::Parser;
use deskdepth::cli::{run, Cli};

fn main() {
    env_logger::init_from_env(env_logger::Env::default().filter_or("DESKDEPTH_LOG", "info"));
    match run(Cli::parse()) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
