fn main() {
    std::process::exit(snrlab::cli::main_with_args(std::env::args_os()));
}
