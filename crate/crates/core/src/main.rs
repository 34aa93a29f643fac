fn main() {
    std::process::exit(kidecomp::cli::main_with_args(std::env::args_os()));
}
