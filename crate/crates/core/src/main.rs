fn main() {
    std::process::exit(beatspace::cli::main_with_args(std::env::args_os()));
}
