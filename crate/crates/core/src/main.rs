use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use colcomp::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            eprint!("{}", out.stderr);
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("colcomp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
