use clap::Parser;

fn main() {
    let result = hcrn::cli::execute(hcrn::cli::Cli::parse());
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    std::process::exit(hcrn::cli::exit_code(&result));
}
