fn main() {
    std::process::exit(divnet::harness::cli::run(std::env::args_os()));
}
