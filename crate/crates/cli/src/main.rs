use clap::Parser;

fn main() {
    let cli = erpo_cli::Cli::parse();
    if let Err(err) = erpo_cli::run(cli) {
        eprintln!("{}", erpo_cli::error_json(&err));
        std::process::exit(1);
    }
}
