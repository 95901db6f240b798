fn main() {
    std::process::exit(infoplane::cli::run(std::env::args_os()));
}
