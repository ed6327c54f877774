fn main() {
    std::process::exit(resae::cli::run(std::env::args_os()));
}
