use std::process::ExitCode;

use clap::Parser;
use difftrace_cli::commands::{run, Cli};

#[global_allocator]
static ALLOC: difftrace_cli::alloc::Counting = difftrace_cli::alloc::Counting;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(exit) => ExitCode::from(exit.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit().code())
        }
    }
}
