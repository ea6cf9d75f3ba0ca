fn main() {
    std::process::exit(diwsim::cli::main_with_args(std::env::args_os()));
}
