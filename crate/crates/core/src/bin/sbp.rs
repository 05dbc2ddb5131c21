fn main() {
    std::process::exit(sbp_core::cli::run_cli(std::env::args_os()));
}
