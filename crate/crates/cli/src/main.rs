use clap::Parser;

use rfde_unfold::problem::to_pretty;
use rfde_unfold_cli::{run, Cli};

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let outcome = run(&cli);
    if let Some(doc) = &outcome.output {
        print!("{}", to_pretty(doc));
    }
    eprintln!("{}", outcome.summary);
    std::process::exit(outcome.code);
}
