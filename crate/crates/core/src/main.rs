fn main() {
    std::process::exit(stopsum::cli::run(std::env::args_os()));
}
