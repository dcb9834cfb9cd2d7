use clap::Parser;

fn main() {
    let cli = ded_monitor_cli::Cli::parse();
    if let Err(e) = ded_monitor_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
