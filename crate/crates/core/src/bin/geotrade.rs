fn main() {
    std::process::exit(geotrade::cli::run(std::env::args_os()));
}
