fn main() {
    std::process::exit(repcap::cli::main_with_args(std::env::args_os()));
}
