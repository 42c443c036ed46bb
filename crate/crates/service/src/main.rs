fn main() {
    std::process::exit(kgdd_service::cli::main_with_args(std::env::args_os()));
}
