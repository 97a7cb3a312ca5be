use clap::Parser;
use ntn_rach::cli::{dispatch, Cli};

fn main() {
    std::process::exit(dispatch(&Cli::parse()).code());
}
