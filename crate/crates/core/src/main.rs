fn main() {
    std::process::exit(mgam::cli::run(std::env::args_os()));
}
