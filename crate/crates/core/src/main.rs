fn main() {
    std::process::exit(semunit::cli::run(std::env::args_os()));
}
