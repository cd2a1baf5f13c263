fn main() {
    std::process::exit(parisi_core::cli::main_with_args(std::env::args_os()));
}
