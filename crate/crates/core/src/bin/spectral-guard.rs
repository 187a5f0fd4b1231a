fn main() {
    std::process::exit(spectral_guard::cli::run(std::env::args_os()));
}
