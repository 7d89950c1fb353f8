fn main() {
    std::process::exit(lastab::run_cli(std::env::args_os()));
}
