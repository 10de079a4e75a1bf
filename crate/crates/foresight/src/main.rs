fn main() {
    std::process::exit(foresight::cli::run_command(std::env::args_os()));
}
