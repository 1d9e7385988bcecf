use clap::Parser;

fn main() {
    let cli = floquet_flow_cli::Cli::parse();
    std::process::exit(floquet_flow_cli::run(cli));
}
