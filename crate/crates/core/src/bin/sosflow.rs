fn main() {
    std::process::exit(sosflow::cli::run(std::env::args_os()));
}
