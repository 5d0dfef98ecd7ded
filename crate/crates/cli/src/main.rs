use clap::Parser;

fn main() {
    let cli = stshap_cli::Cli::parse();
    match stshap_cli::run(&cli) {
        Ok(text) => print!("{text}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
