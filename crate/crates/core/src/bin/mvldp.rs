fn main() {
    std::process::exit(mvldp::cli::run(std::env::args_os()));
}
