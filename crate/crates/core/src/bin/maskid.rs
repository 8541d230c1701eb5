use clap::Parser;
use maskid_core::cli::{run, Cli};

fn main() {
    let mut cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit code 0.
            if e.use_stderr() {
                let _ = e.print();
                std::process::exit(2);
            }
            let _ = e.print();
            std::process::exit(0);
        }
    };
    if let Err(e) = run(&mut cli) {
        eprintln!("error: {}", e);
        std::process::exit(e.exit_code());
    }
}
