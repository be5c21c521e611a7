fn main() {
    std::process::exit(finrot::cli::run(std::env::args_os()));
}
