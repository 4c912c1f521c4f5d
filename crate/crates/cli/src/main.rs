fn main() {
    std::process::exit(qpost_cli::run_cli(std::env::args_os()));
}
