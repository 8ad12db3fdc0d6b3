fn main() {
    std::process::exit(ligas::cli::run(std::env::args_os()));
}
