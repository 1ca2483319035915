fn main() {
    std::process::exit(qnet::cli::run_cli(std::env::args_os()));
}
