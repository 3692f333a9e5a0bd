use clap::Parser;

fn main() {
    let cli = sepconv::cli::Cli::parse();
    if let Err(e) = sepconv::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
