fn main() {
    std::process::exit(brt_cli::run(std::env::args_os()));
}
