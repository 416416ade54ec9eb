fn main() {
    std::process::exit(lpflow::cli::run(std::env::args_os()));
}
