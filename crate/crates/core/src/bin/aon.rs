fn main() {
    std::process::exit(aon_core::cli::cli_main(std::env::args_os()));
}
