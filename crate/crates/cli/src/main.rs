fn main() {
    std::process::exit(nlx_cli::run_cli(std::env::args_os()));
}
