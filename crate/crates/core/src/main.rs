fn main() {
    std::process::exit(qofc::cli::run(std::env::args_os()));
}
