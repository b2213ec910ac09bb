fn main() {
    std::process::exit(railc_cli::cli_main(std::env::args_os()));
}
