fn main() {
    std::process::exit(faultline_cli::run(std::env::args_os()));
}
