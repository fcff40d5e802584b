fn main() {
    std::process::exit(jitvp::cli::main_with_args(std::env::args_os()));
}
