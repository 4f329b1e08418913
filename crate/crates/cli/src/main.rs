fn main() {
    std::process::exit(kljn_cli::run(std::env::args_os()));
}
