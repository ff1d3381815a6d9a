fn main() {
    std::process::exit(regionscad::cli::cli_main(std::env::args_os()));
}
