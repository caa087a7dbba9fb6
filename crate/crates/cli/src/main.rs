fn main() {
    std::process::exit(gapsac_cli::run(std::env::args_os()));
}
