fn main() {
    std::process::exit(evcs_harness::cli::run_cli(std::env::args_os()));
}
