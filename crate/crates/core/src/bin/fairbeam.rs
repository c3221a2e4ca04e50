fn main() {
    std::process::exit(fairbeam::cli::run(std::env::args_os()));
}
