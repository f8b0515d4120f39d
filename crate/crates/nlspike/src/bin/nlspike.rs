fn main() {
    std::process::exit(nlspike::cli::run(std::env::args_os()));
}
