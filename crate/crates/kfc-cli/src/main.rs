fn main() {
    std::process::exit(kfc_cli::run_cli(std::env::args_os()));
}
