fn main() {
    std::process::exit(csrnet::cli::main_with(std::env::args_os()));
}
