use clap::Parser;

fn main() {
    actioncodec_cli::apply_thread_cap();
    let cli = actioncodec_cli::Cli::parse();
    if let Err(e) = actioncodec_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
