fn main() {
    std::process::exit(petersson_cli::run(std::env::args_os()));
}
