fn main() {
    std::process::exit(outage_locator::cli::run(std::env::args_os()));
}
