fn main() {
    std::process::exit(garma_cli::run(std::env::args_os()));
}
