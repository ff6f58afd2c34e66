fn main() {
    let outcome = qpi_cli::run(std::env::args_os().skip(1));
    std::process::exit(outcome.exit_code);
}
