use clap::Parser;

use gcil_cli::args::Cli;
use gcil_cli::run;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run::dispatch(cli) {
        // One machine-parsable line on stderr; exit status marks the failure.
        eprintln!("{}", serde_json::json!({ "schema": 1, "error": e.to_string() }));
        std::process::exit(1);
    }
}
