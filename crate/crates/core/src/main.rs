fn main() {
    std::process::exit(rgam::cli::run_from(std::env::args_os()));
}
