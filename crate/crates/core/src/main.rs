fn main() {
    std::process::exit(siamtune::cli::main_with_args(std::env::args_os()));
}
