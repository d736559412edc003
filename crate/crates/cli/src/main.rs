fn main() {
    std::process::exit(pto_adjust_cli::run_cli(std::env::args_os()));
}
