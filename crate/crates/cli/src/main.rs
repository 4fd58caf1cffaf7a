fn main() {
    std::process::exit(burstkit_cli::run(std::env::args_os()));
}
