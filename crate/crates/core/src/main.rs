fn main() {
    std::process::exit(covshift::cli::run(std::env::args_os()));
}
