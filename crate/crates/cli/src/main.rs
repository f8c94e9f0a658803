fn main() {
    let code = iterint_cli::run(std::env::args().collect());
    std::process::exit(code);
}
