fn main() {
    std::process::exit(sparsespec::cli::run(std::env::args_os()));
}
