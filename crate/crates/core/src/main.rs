fn main() {
    std::process::exit(ricciflow::harness::run_cli(std::env::args_os()));
}
