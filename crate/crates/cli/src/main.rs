use clap::Parser;

fn main() {
    let cli = degen_cli::Cli::parse();
    if let Err(e) = degen_cli::run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
