fn main() {
    std::process::exit(slvm::cli::run(std::env::args_os()));
}
