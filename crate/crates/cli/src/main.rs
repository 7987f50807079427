use clap::Parser;

fn main() {
    let cli = acute_cli::Cli::parse();
    if let Err(e) = acute_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
