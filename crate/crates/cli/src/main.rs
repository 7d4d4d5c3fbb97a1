use clap::Parser;

fn main() {
    matcap_core::par::init_threads();
    let cli = matcap_cli::Cli::parse();
    if let Err(e) = matcap_cli::run(cli) {
        eprintln!("matcap: {e}");
        std::process::exit(e.exit_code());
    }
}
