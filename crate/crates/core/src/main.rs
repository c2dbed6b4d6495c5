fn main() {
    std::process::exit(camtrack::shell::cli::cli_main(std::env::args_os()));
}
