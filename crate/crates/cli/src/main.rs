use clap::Parser;
use gevrey_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(&cli) as i32);
}
