fn main() {
    std::process::exit(delag_core::cli::run(std::env::args_os()));
}
