fn main() {
    std::process::exit(chaplygin::cli::main_with_args(std::env::args_os()));
}
