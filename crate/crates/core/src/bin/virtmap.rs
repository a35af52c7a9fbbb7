fn main() {
    std::process::exit(virtmap::cli::main_with_args(std::env::args_os()));
}
