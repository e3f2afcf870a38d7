fn main() {
    std::process::exit(enskog::cli::main_with_args(std::env::args_os()));
}
