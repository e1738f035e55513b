fn main() {
    std::process::exit(longline_cli::run(std::env::args_os()));
}
