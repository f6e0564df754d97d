fn main() {
    std::process::exit(rsl::cli::run_cli(std::env::args_os()));
}
