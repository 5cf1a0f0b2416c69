fn main() {
    std::process::exit(pvfim::cli::run(std::env::args_os()));
}
