fn main() {
    std::process::exit(optf::cli::run(std::env::args_os()));
}
