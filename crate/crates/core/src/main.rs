fn main() {
    std::process::exit(mixflow::cli::run_cli(std::env::args_os()));
}
