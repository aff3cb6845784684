fn main() {
    std::process::exit(choquard_cli::run(std::env::args_os()));
}
