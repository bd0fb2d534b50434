use clap::Parser;
use holehom::cli::{dispatch, Cli};

fn main() {
    let cli = Cli::parse();
    std::process::exit(dispatch(&cli.command));
}
