fn main() {
    std::process::exit(spflow::cli::run(std::env::args_os()));
}
