use clap::Parser;

fn main() {
    let cli = hodep_cli::args::Cli::parse();
    std::process::exit(hodep_cli::run(cli));
}
