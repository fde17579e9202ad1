fn main() {
    std::process::exit(odcal::cli::run(std::env::args_os()));
}
