fn main() {
    std::process::exit(emotive_server::cli::run(std::env::args_os()));
}
