fn main() {
    std::process::exit(softsphere::cli::run(std::env::args_os()));
}
