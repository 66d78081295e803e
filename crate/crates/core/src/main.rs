fn main() {
    std::process::exit(gazegate::cli::main_with_args(std::env::args_os()));
}
