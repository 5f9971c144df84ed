fn main() {
    std::process::exit(relaynet_cli::run(std::env::args_os()));
}
