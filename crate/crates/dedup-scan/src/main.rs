fn main() {
    std::process::exit(dedup_scan::cli::run(std::env::args_os()));
}
