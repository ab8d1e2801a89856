fn main() {
    std::process::exit(vigen_cli::cli_main(std::env::args().skip(1)));
}
