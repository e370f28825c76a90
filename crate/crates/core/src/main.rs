fn main() {
    std::process::exit(corrupt_sense::cli::run(std::env::args_os()));
}
