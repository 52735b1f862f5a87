fn main() {
    std::process::exit(cutofflab::cli::main_with_args(std::env::args_os()));
}
