fn main() {
    std::process::exit(loopx_cli::run(std::env::args_os()));
}
