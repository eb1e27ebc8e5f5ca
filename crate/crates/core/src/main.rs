fn main() {
    std::process::exit(ubi_core::cli::main_with_args(std::env::args_os()));
}
