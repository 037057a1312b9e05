fn main() {
    std::process::exit(abcpg::cli::main(std::env::args_os()));
}
