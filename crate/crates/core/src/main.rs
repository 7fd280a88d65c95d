fn main() {
    std::process::exit(trajclass::cli::main_with_args(std::env::args_os()));
}
