use clap::Parser;
use emreduce_cli::commands::{run, Cli};
use emreduce_cli::{exit_code, thread_cap};

fn main() {
    let cli = Cli::parse();
    if let Some(n) = thread_cap() {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the worker pool: {e}");
        }
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let mut source = std::error::Error::source(&e);
        while let Some(s) = source {
            eprintln!("  caused by: {s}");
            source = s.source();
        }
        std::process::exit(exit_code(&e));
    }
}
